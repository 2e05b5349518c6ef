"""Information-theoretic diagnostics for trained bundles.

Mutual information is the plug-in estimate from a joint histogram of
discretized samples: deterministic and biased, which is fine for the
trend tracking done here. I(Z;X) is not directly estimable for
continuous Z and X, so both sides are binned (default 16 bins/dim on the
first 2 dims) and the result is reported as a proxy. All quantities are
in nats.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from . import models
from .autodiff import Tensor
from .datasets import DomainDataset
from .errors import ContractError
from .models import ModelBundle
from .perturb import PerturbationConfig, _random_start


@dataclass(frozen=True)
class BinningSpec:
    bins_per_dim: int = 16
    project_first_k: Optional[int] = 2  # None: bin every dimension

    def __post_init__(self):
        if self.bins_per_dim < 2:
            raise ContractError(f"bins_per_dim must be >= 2, got {self.bins_per_dim}")
        if self.project_first_k is not None and self.project_first_k < 1:
            raise ContractError("project_first_k must be >= 1 when given")


@dataclass
class DiagnosticsReport:
    mi_z_d: float
    mi_z_y: float
    mi_z_x_proxy: float
    mi_z_x_perturbed_proxy: float
    input_grad_norm: float
    manifold_deviation: float
    class_kl: dict          # class index -> KL(source || target) in nats
    class_kl_reverse: dict  # class index -> KL(target || source)
    class_kl_mean: float
    ib_score: float
    ada_ib_score: float

    def to_text(self) -> str:
        lines = ["# diagnostics report (all information quantities in nats)",
                 "# mi_z_x_* are binned proxies, not exact mutual information"]
        for key in ("mi_z_d", "mi_z_y", "mi_z_x_proxy", "mi_z_x_perturbed_proxy",
                    "input_grad_norm", "manifold_deviation", "class_kl_mean",
                    "ib_score", "ada_ib_score"):
            lines.append(f"{key} = {getattr(self, key):.9g}")
        for c in sorted(self.class_kl):
            lines.append(f"class_kl_src_to_tgt[{c}] = {self.class_kl[c]:.9g}")
        for c in sorted(self.class_kl_reverse):
            lines.append(f"class_kl_tgt_to_src[{c}] = {self.class_kl_reverse[c]:.9g}")
        return "\n".join(lines) + "\n"

    def summary_dict(self) -> dict:
        return {
            "mi_z_d": self.mi_z_d, "mi_z_y": self.mi_z_y,
            "mi_z_x_proxy": self.mi_z_x_proxy,
            "input_grad_norm": self.input_grad_norm,
            "manifold_deviation": self.manifold_deviation,
            "class_kl_mean": self.class_kl_mean,
            "ib_score": self.ib_score, "ada_ib_score": self.ada_ib_score,
        }


# ---------------------------------------------------------------------------
# binned mutual information


def discretize(x: np.ndarray, spec: BinningSpec) -> np.ndarray:
    """Map continuous samples to integer cell codes via equal-width bins."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if spec.project_first_k is not None:
        x = x[:, :spec.project_first_k]
    n, d = x.shape
    codes = np.zeros(n, dtype=np.int64)
    for j in range(d):
        col = x[:, j]
        lo, hi = col.min(), col.max()
        if hi <= lo:
            idx = np.zeros(n, dtype=np.int64)
        else:
            idx = np.minimum((spec.bins_per_dim * (col - lo) / (hi - lo)).astype(np.int64),
                             spec.bins_per_dim - 1)
        codes = codes * spec.bins_per_dim + idx
    return codes


def _codes(x, spec: BinningSpec) -> np.ndarray:
    x = np.asarray(x)
    if np.issubdtype(x.dtype, np.integer) and x.ndim == 1:
        return x.astype(np.int64)
    return discretize(x, spec)


def mi_binned(a, b, spec: Optional[BinningSpec] = None) -> float:
    """Plug-in mutual information of the joint histogram, in nats.

    Integer 1-d inputs are taken as already discrete; anything else is
    binned per ``spec``. Clipped at 0 (the plug-in value can dip a hair
    below zero from float rounding).
    """
    spec = spec or BinningSpec()
    ca, cb = _codes(a, spec), _codes(b, spec)
    if ca.shape != cb.shape:
        raise ContractError(f"sample counts differ: {ca.shape[0]} vs {cb.shape[0]}")
    if ca.shape[0] < 10:
        raise ContractError("mi_binned needs at least 10 samples")
    _, ia = np.unique(ca, return_inverse=True)
    _, ib = np.unique(cb, return_inverse=True)
    na, nb = ia.max() + 1, ib.max() + 1
    joint = np.zeros((na, nb))
    np.add.at(joint, (ia, ib), 1.0)
    joint /= joint.sum()
    pa = joint.sum(axis=1, keepdims=True)
    pb = joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    mi = float(np.sum(joint[nz] * np.log(joint[nz] / (pa @ pb)[nz])))
    return max(mi, 0.0)


# ---------------------------------------------------------------------------
# model probes


def input_grad_norm(bundle: ModelBundle, dataset: DomainDataset) -> float:
    """Mean over samples of ||d loss / d x||_2 for the per-sample loss."""
    if dataset.labels is None:
        raise ContractError("input_grad_norm requires a labeled dataset")
    x = Tensor(dataset.features, requires_grad=True)
    loss = ad.softmax_cross_entropy(models.class_logits(bundle, x), dataset.labels)
    ad.backward(loss)
    # the mean-loss gradient rows are per-sample gradients scaled by 1/n
    n = len(dataset)
    return float(np.mean(np.linalg.norm(n * x.grad, axis=1)))


def manifold_deviation(bundle: ModelBundle, dataset: DomainDataset,
                       cfg: PerturbationConfig, n_draws: int = 8,
                       seed: int = 0) -> float:
    """Mean over samples of the worst representation displacement seen
    across n_draws uniform in-ball perturbations."""
    if n_draws < 1:
        raise ContractError(f"n_draws must be >= 1, got {n_draws}")
    x = dataset.features
    z0 = models.features(bundle, Tensor(x)).values
    if cfg.epsilon == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    worst = np.zeros(x.shape[0])
    for _ in range(n_draws):
        delta = _random_start(x.shape, cfg, rng)
        z = models.features(bundle, Tensor(x + delta)).values
        worst = np.maximum(worst, np.linalg.norm(z - z0, axis=1))
    return float(worst.mean())


def diag_gaussian_kl(mu1, var1, mu2, var2) -> float:
    """KL(N(mu1, diag var1) || N(mu2, diag var2)) in nats."""
    mu1, var1 = np.asarray(mu1, dtype=np.float64), np.asarray(var1, dtype=np.float64)
    mu2, var2 = np.asarray(mu2, dtype=np.float64), np.asarray(var2, dtype=np.float64)
    return float(0.5 * np.sum(var1 / var2 + (mu2 - mu1) ** 2 / var2 - 1.0
                              + np.log(var2 / var1)))


VAR_FLOOR = 1e-6


def _fit_diag_gaussian(z: np.ndarray):
    mu = z.mean(axis=0)
    var = np.maximum(z.var(axis=0), VAR_FLOOR)
    return mu, var


def class_conditional_kl(bundle: ModelBundle, source: DomainDataset,
                         target: DomainDataset):
    """Per-class KL between diagonal-Gaussian fits of Z|Y=c in each domain.

    Returns (kl_src_to_tgt, kl_tgt_to_src), each a dict class -> nats.
    The target labels are used only for this evaluation.
    """
    if source.labels is None or target.labels is None:
        raise ContractError("class_conditional_kl requires labels in both domains")
    z_s = models.features(bundle, Tensor(source.features)).values
    z_t = models.features(bundle, Tensor(target.features)).values
    d_z = z_s.shape[1]
    classes = sorted(set(source.labels.tolist()) | set(target.labels.tolist()))
    fwd, rev = {}, {}
    for c in classes:
        zs_c = z_s[source.labels == c]
        zt_c = z_t[target.labels == c]
        for dom, z in (("source", zs_c), ("target", zt_c)):
            if z.shape[0] < d_z + 2:
                raise ContractError(
                    f"class {c} has {z.shape[0]} samples in the {dom} domain, "
                    f"need at least {d_z + 2}")
        mu_s, var_s = _fit_diag_gaussian(zs_c)
        mu_t, var_t = _fit_diag_gaussian(zt_c)
        fwd[c] = diag_gaussian_kl(mu_s, var_s, mu_t, var_t)
        rev[c] = diag_gaussian_kl(mu_t, var_t, mu_s, var_s)
    return fwd, rev


def ib_scores(mi_z_x_proxy: float, mi_z_x_perturbed_proxy: float, mi_z_y: float,
              mi_z_d: float, beta: float = 1.0, lam: float = 1.0):
    """(plain, perturbation-aware) bottleneck scores from MI components."""
    ib = mi_z_x_proxy - beta * mi_z_y
    ada_ib = mi_z_x_perturbed_proxy + lam * mi_z_d - beta * mi_z_y
    return ib, ada_ib


def compute_report(bundle: ModelBundle, source: DomainDataset,
                   target: DomainDataset, perturb_cfg: Optional[PerturbationConfig] = None,
                   spec: Optional[BinningSpec] = None, beta: float = 1.0,
                   lam: float = 1.0, seed: int = 0) -> DiagnosticsReport:
    """Full diagnostics pass; read-only with respect to the model."""
    spec = spec or BinningSpec()
    perturb_cfg = perturb_cfg or PerturbationConfig(epsilon=0.1, norm="linf")
    x = np.vstack([source.features, target.features])
    d_ind = np.concatenate([np.zeros(len(source), dtype=np.int64),
                            np.ones(len(target), dtype=np.int64)])
    z = models.features(bundle, Tensor(x)).values

    mi_z_d = mi_binned(z, d_ind, spec)
    mi_z_y = mi_binned(models.features(bundle, Tensor(source.features)).values,
                       source.labels, spec) if source.labels is not None else 0.0
    mi_z_x = mi_binned(z, x, spec)
    if perturb_cfg.epsilon > 0:
        rng = np.random.default_rng(seed)
        xp = x + _random_start(x.shape, perturb_cfg, rng)
        mi_z_xp = mi_binned(models.features(bundle, Tensor(xp)).values, xp, spec)
    else:
        mi_z_xp = mi_z_x

    grad_norm = input_grad_norm(bundle, source) if source.labels is not None else 0.0
    dev = manifold_deviation(bundle, source, perturb_cfg, seed=seed)
    if source.labels is not None and target.labels is not None:
        fwd, rev = class_conditional_kl(bundle, source, target)
    else:
        fwd, rev = {}, {}
    kl_mean = float(np.mean(list(fwd.values()))) if fwd else 0.0
    ib, ada_ib = ib_scores(mi_z_x, mi_z_xp, mi_z_y, mi_z_d, beta=beta, lam=lam)
    return DiagnosticsReport(
        mi_z_d=mi_z_d, mi_z_y=mi_z_y, mi_z_x_proxy=mi_z_x,
        mi_z_x_perturbed_proxy=mi_z_xp, input_grad_norm=grad_norm,
        manifold_deviation=dev, class_kl=fwd, class_kl_reverse=rev,
        class_kl_mean=kl_mean, ib_score=ib, ada_ib_score=ada_ib)
