"""The four training loss terms and their weighted combination.

- source classification loss: cross-entropy on adversarial source samples
- adversarial domain loss: binary cross-entropy of the domain discriminator
- consistency loss: squared representation distance between clean and
  perturbed target samples
- total: src_cls + lambda_adv * adv_dom + lambda_cons * cons

The minimax direction of the domain term (who descends, who ascends) is
decided by the trainer; these functions just compute values and graphs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import models
from .autodiff import Tensor
from .errors import ConfigError, ContractError

CONSISTENCY_SPACES = ("representation", "probs")


@dataclass(frozen=True)
class LossWeights:
    lambda_adv: float = 0.1
    lambda_cons: float = 1.0

    def __post_init__(self):
        for name in ("lambda_adv", "lambda_cons"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ConfigError(f"{name} must be finite and >= 0, got {v}")


@dataclass
class LossBreakdown:
    src_cls: float
    adv_dom: float
    cons: float
    total: float


def _as_values(x):
    return x.values if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def src_cls_loss(bundle, x_s, delta_s, y_s) -> Tensor:
    """Mean cross-entropy of the classifier on x_s + delta_s."""
    x = Tensor(_as_values(x_s) + _as_values(delta_s))
    return ad.softmax_cross_entropy(models.class_logits(bundle, x), y_s)


def domain_bce(prob_s: Tensor, prob_t: Tensor) -> Tensor:
    """-mean log d(z_s) - mean log(1 - d(z_t)) on discriminator outputs."""
    if prob_s.values.size == 0 or prob_t.values.size == 0:
        raise ContractError("domain loss requires non-empty source and target batches")
    term_s = ad.scale(ad.mean(ad.log(prob_s)), -1.0)
    one_minus_t = ad.sub(Tensor(np.ones_like(prob_t.values)), prob_t)
    term_t = ad.scale(ad.mean(ad.log(one_minus_t)), -1.0)
    return ad.add(term_s, term_t)


def adv_dom_loss(bundle, x_s, x_t) -> Tensor:
    """Domain discrimination loss on clean source and target batches."""
    x_s, x_t = _as_values(x_s), _as_values(x_t)
    if x_s.shape[0] == 0 or x_t.shape[0] == 0:
        raise ContractError("domain loss requires non-empty source and target batches")
    return domain_bce(models.domain_prob(bundle, Tensor(x_s)),
                      models.domain_prob(bundle, Tensor(x_t)))


def consistency_loss(bundle, x_t, delta_t, space: str = "representation") -> Tensor:
    """Mean squared distance between clean and perturbed target outputs.

    ``space`` picks where the distance is measured: the representation
    (default) or the softmax class probabilities.
    """
    if space not in CONSISTENCY_SPACES:
        raise ConfigError(f"space must be one of {CONSISTENCY_SPACES}, got {space!r}")
    x = _as_values(x_t)
    delta = _as_values(delta_t)
    if x.shape != delta.shape:
        raise ad.DimensionError(
            f"consistency_loss: x shape {x.shape} != delta shape {delta.shape}")
    if space == "representation":
        clean = models.features(bundle, Tensor(x))
        pert = models.features(bundle, Tensor(x + delta))
    else:
        clean = ad.softmax(models.class_logits(bundle, Tensor(x)))
        pert = ad.softmax(models.class_logits(bundle, Tensor(x + delta)))
    diff = ad.sub(clean, pert)
    return ad.scale(ad.tsum(ad.square(diff)), 1.0 / x.shape[0])


def total_loss(src_cls, adv_dom, cons, weights: LossWeights) -> LossBreakdown:
    """Assemble the weighted total from already-computed terms.

    Accepts scalar tensors or floats; returns plain floats.
    """
    s = src_cls.item() if isinstance(src_cls, Tensor) else float(src_cls)
    d = adv_dom.item() if isinstance(adv_dom, Tensor) else float(adv_dom)
    c = cons.item() if isinstance(cons, Tensor) else float(cons)
    total = s + weights.lambda_adv * d + weights.lambda_cons * c
    return LossBreakdown(src_cls=s, adv_dom=d, cons=c, total=total)


def total_loss_graph(src_cls: Tensor, adv_dom: Tensor, cons: Tensor,
                     weights: LossWeights) -> Tensor:
    """Differentiable version of the weighted total, as written."""
    out = src_cls
    out = ad.add(out, ad.scale(adv_dom, weights.lambda_adv))
    out = ad.add(out, ad.scale(cons, weights.lambda_cons))
    return out
