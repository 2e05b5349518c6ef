"""Training loop: adversarial generation, minimax updates, metrics.

One call to ``train_step`` performs, in order:

1. generate source perturbations (PGD, labels) and target perturbations
   (consistency ascent, no labels);
2. compute the adversarial source classification loss;
3. update the discriminator to minimize the domain loss, then let the
   feature extractor work against it (the domain term enters the feature
   update with a negated weight);
4. compute the consistency term on target samples;
5. take one optimizer step on the full weighted objective.

``minimax_mode`` picks between two equivalent wirings: "alternating"
(separate discriminator step, then a feature/classifier step with the
domain gradient negated) and "reversal" (one pass through a
gradient-reversal node, single optimizer step for all parameters).

Runs are fully determined by (config, datasets): model init, shuffling
and attack randomness all derive from config.seed.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from . import autodiff as ad
from . import models, objectives, perturb
from .autodiff import Tensor
from .datasets import DomainDataset
from .errors import ConfigError, ContractError, NumericsError
from .models import BundleSpec, ModelBundle
from .objectives import LossBreakdown, LossWeights
from .perturb import PerturbationConfig

MINIMAX_MODES = ("alternating", "reversal")
OPTIMIZERS = ("sgd", "sgd_momentum", "adam")


# ---------------------------------------------------------------------------
# optimizers


class Sgd:
    def __init__(self, params, lr: float):
        self.params = list(params)
        self.lr = lr

    def step(self):
        for p in self.params:
            if p.grad is not None:
                p.values = p.values - self.lr * p.grad


class SgdMomentum:
    def __init__(self, params, lr: float, momentum: float = 0.9):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.velocity = [np.zeros_like(p.values) for p in self.params]

    def step(self):
        for p, v in zip(self.params, self.velocity):
            if p.grad is None:
                continue
            v *= self.momentum
            v += p.grad
            p.values = p.values - self.lr * v


class Adam:
    def __init__(self, params, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p.values) for p in self.params]
        self.v = [np.zeros_like(p.values) for p in self.params]

    def step(self):
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad * p.grad
            p.values = p.values - self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def make_optimizer(name: str, params, lr: float):
    if name == "sgd":
        return Sgd(params, lr)
    if name == "sgd_momentum":
        return SgdMomentum(params, lr)
    if name == "adam":
        return Adam(params, lr)
    raise ConfigError(f"unknown optimizer {name!r}, expected one of {OPTIMIZERS}")


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 100
    batch_size: int = 64
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0
    minimax_mode: str = "alternating"
    consistency_space: str = "representation"
    weights: LossWeights = field(default_factory=LossWeights)
    source_perturb: PerturbationConfig = field(default_factory=PerturbationConfig)
    target_perturb: PerturbationConfig = field(default_factory=PerturbationConfig)
    model: BundleSpec = field(default_factory=BundleSpec)

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        # 0 is allowed: a zero-rate step is the documented no-op case
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.minimax_mode not in MINIMAX_MODES:
            raise ConfigError(f"unknown minimax_mode {self.minimax_mode!r}")
        if self.consistency_space not in objectives.CONSISTENCY_SPACES:
            raise ConfigError(f"unknown consistency_space {self.consistency_space!r}")


_TOP_KEYS = {"epochs", "batch_size", "learning_rate", "optimizer", "seed",
             "minimax_mode", "consistency_space"}
_TABLE_KEYS = {"weights", "model", "source_perturb", "target_perturb"}
_PERTURB_KEYS = {"epsilon", "norm", "steps", "step_size", "random_init",
                 "clip_min", "clip_max"}
_WEIGHT_KEYS = {"lambda_adv", "lambda_cons"}
_MODEL_KEYS = {"feature_widths", "classifier_widths", "discriminator_widths",
               "activation"}


def _check_keys(table: dict, allowed: set, where: str):
    unknown = set(table) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")


def config_from_dict(raw: dict) -> TrainingConfig:
    """Build a TrainingConfig from a parsed TOML table. Unknown keys error."""
    _check_keys(raw, _TOP_KEYS | _TABLE_KEYS, "config")
    kwargs = {k: raw[k] for k in _TOP_KEYS if k in raw}
    if "weights" in raw:
        _check_keys(raw["weights"], _WEIGHT_KEYS, "[weights]")
        kwargs["weights"] = LossWeights(**raw["weights"])
    if "model" in raw:
        _check_keys(raw["model"], _MODEL_KEYS, "[model]")
        kwargs["model"] = BundleSpec(**{k: tuple(v) if isinstance(v, list) else v
                                        for k, v in raw["model"].items()})
    for key in ("source_perturb", "target_perturb"):
        if key in raw:
            _check_keys(raw[key], _PERTURB_KEYS, f"[{key}]")
            kwargs[key] = PerturbationConfig(**raw[key])
    return TrainingConfig(**kwargs)


def config_from_toml(text: str, where: str = "config") -> TrainingConfig:
    try:
        import tomllib as toml
    except ModuleNotFoundError:
        import tomli as toml
    try:
        raw = toml.loads(text)
    except toml.TOMLDecodeError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    return config_from_dict(raw)


def load_config(path) -> TrainingConfig:
    with open(path, encoding="utf-8") as fh:
        return config_from_toml(fh.read(), where=str(path))


def config_to_toml(cfg: TrainingConfig) -> str:
    """Resolved-config snapshot; re-loading it reproduces the run exactly."""

    def fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, str):
            return f'"{v}"'
        if isinstance(v, tuple):
            return "[" + ", ".join(str(x) for x in v) + "]"
        return repr(v)

    out = io.StringIO()
    for key in sorted(_TOP_KEYS):
        out.write(f"{key} = {fmt(getattr(cfg, key))}\n")
    sections = {
        "weights": cfg.weights, "model": cfg.model,
        "source_perturb": cfg.source_perturb, "target_perturb": cfg.target_perturb,
    }
    for name in ("weights", "model", "source_perturb", "target_perturb"):
        obj = sections[name]
        out.write(f"\n[{name}]\n")
        for f in fields(obj):
            v = getattr(obj, f.name)
            if v is None:
                continue  # optional key left at its default
            out.write(f"{f.name} = {fmt(v)}\n")
    return out.getvalue()


# ---------------------------------------------------------------------------
# metrics


METRIC_COLUMNS = ("epoch", "src_cls", "adv_dom", "cons", "total",
                  "source_accuracy", "target_accuracy", "discriminator_accuracy")


@dataclass
class MetricsRow:
    epoch: int
    src_cls: float
    adv_dom: float
    cons: float
    total: float
    source_accuracy: float
    target_accuracy: float
    discriminator_accuracy: float
    diagnostics: Optional[dict] = None


def metrics_csv(rows) -> str:
    diag_keys = []
    if rows and rows[0].diagnostics:
        diag_keys = sorted(rows[0].diagnostics)
    header = ",".join(METRIC_COLUMNS + tuple(diag_keys))
    lines = [header]
    for r in rows:
        cells = [str(r.epoch)]
        for col in METRIC_COLUMNS[1:]:
            cells.append(f"{getattr(r, col):.9g}")
        for k in diag_keys:
            cells.append(f"{r.diagnostics[k]:.9g}")
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def write_metrics_csv(rows, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(metrics_csv(rows))


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainState:
    config: TrainingConfig
    bundle: ModelBundle
    opt_theta: object
    opt_phi: object
    opt_all: object
    attack_rng: np.random.Generator
    disc_hits: int = 0
    disc_total: int = 0


def init_state(cfg: TrainingConfig) -> TrainState:
    bundle = ModelBundle.build(cfg.model, cfg.seed)
    return TrainState(
        config=cfg,
        bundle=bundle,
        opt_theta=make_optimizer(cfg.optimizer, bundle.theta_parameters(), cfg.learning_rate),
        opt_phi=make_optimizer(cfg.optimizer, bundle.phi_parameters(), cfg.learning_rate),
        opt_all=make_optimizer(cfg.optimizer, bundle.parameters(), cfg.learning_rate),
        attack_rng=np.random.default_rng([cfg.seed, 2]),
    )


def _check_finite(name: str, t: Tensor) -> Tensor:
    v = t.item()
    if not np.isfinite(v):
        raise NumericsError(name, v)
    return t


def train_step(state: TrainState, source_batch, target_batch) -> LossBreakdown:
    """One iteration of the 5-step procedure; returns the loss breakdown."""
    xs, ys = source_batch
    xt = np.asarray(target_batch, dtype=np.float64)
    xs = np.asarray(xs, dtype=np.float64)
    if xs.shape[0] == 0 or xt.shape[0] == 0:
        raise ContractError("train_step requires non-empty source and target batches")
    cfg = state.config
    bundle = state.bundle
    w = cfg.weights

    # step 1: perturbations against the current (frozen) model
    scfg, tcfg = cfg.source_perturb, cfg.target_perturb
    delta_s = perturb.pgd(bundle, xs, ys, scfg, rng=state.attack_rng) \
        if scfg.epsilon > 0 else np.zeros_like(xs)
    use_cons = w.lambda_cons > 0
    delta_t = perturb.target_perturb(bundle, xt, tcfg, rng=state.attack_rng) \
        if (use_cons and tcfg.epsilon > 0) else np.zeros_like(xt)

    use_dom = w.lambda_adv > 0

    if cfg.minimax_mode == "alternating":
        # step 3a: discriminator descends the domain loss
        dom_value = 0.0
        if use_dom:
            bundle.zero_grad()
            dom_t = _check_finite("adv_dom", objectives.adv_dom_loss(bundle, xs, xt))
            ad.backward(dom_t)
            state.opt_phi.step()

        # steps 2, 3b, 4, 5: one step on the weighted total; domain term negated
        # so the feature extractor ascends what the discriminator descends
        bundle.zero_grad()
        src_t = _check_finite("src_cls", objectives.src_cls_loss(bundle, xs, delta_s, ys))
        theta_loss = src_t
        if use_dom:
            dom_t2 = _check_finite("adv_dom", objectives.adv_dom_loss(bundle, xs, xt))
            dom_value = dom_t2.item()
            _track_disc_accuracy(state, bundle, xs, xt)
            theta_loss = ad.add(theta_loss, ad.scale(dom_t2, -w.lambda_adv))
        cons_value = 0.0
        if use_cons:
            cons_t = _check_finite(
                "cons", objectives.consistency_loss(bundle, xt, delta_t,
                                                    space=cfg.consistency_space))
            cons_value = cons_t.item()
            theta_loss = ad.add(theta_loss, ad.scale(cons_t, w.lambda_cons))
        ad.backward(theta_loss)
        state.opt_theta.step()
        return objectives.total_loss(src_t.item(), dom_value, cons_value, w)

    # reversal mode: one pass, gradient-reversal layer on the domain branch
    bundle.zero_grad()
    src_t = _check_finite("src_cls", objectives.src_cls_loss(bundle, xs, delta_s, ys))
    loss = src_t
    dom_value = 0.0
    if use_dom:
        z_s = models.features(bundle, Tensor(xs))
        z_t = models.features(bundle, Tensor(xt))
        p_s = models.domain_prob_from_features(bundle, ad.grl(z_s))
        p_t = models.domain_prob_from_features(bundle, ad.grl(z_t))
        dom_t = _check_finite("adv_dom", objectives.domain_bce(p_s, p_t))
        dom_value = dom_t.item()
        _track_disc_accuracy(state, bundle, xs, xt, probs=(p_s.values, p_t.values))
        loss = ad.add(loss, ad.scale(dom_t, w.lambda_adv))
    cons_value = 0.0
    if use_cons:
        cons_t = _check_finite(
            "cons", objectives.consistency_loss(bundle, xt, delta_t,
                                                space=cfg.consistency_space))
        cons_value = cons_t.item()
        loss = ad.add(loss, ad.scale(cons_t, w.lambda_cons))
    ad.backward(loss)
    state.opt_all.step()
    return objectives.total_loss(src_t.item(), dom_value, cons_value, w)


def _track_disc_accuracy(state, bundle, xs, xt, probs=None):
    if probs is None:
        p_s = models.domain_prob(bundle, Tensor(xs)).values
        p_t = models.domain_prob(bundle, Tensor(xt)).values
    else:
        p_s, p_t = probs
    state.disc_hits += int((p_s > 0.5).sum()) + int((p_t <= 0.5).sum())
    state.disc_total += p_s.size + p_t.size


def evaluate(bundle: ModelBundle, dataset: DomainDataset) -> float:
    """Fraction of argmax-correct predictions; ties go to the lowest class."""
    if dataset.labels is None:
        raise ContractError("evaluate requires a labeled dataset")
    logits = models.class_logits(bundle, Tensor(dataset.features)).values
    pred = np.argmax(logits, axis=1)
    return float(np.mean(pred == dataset.labels))


def _target_batches(n_target: int, batch_size: int, rng: np.random.Generator):
    """Endless stream of target index batches, reshuffled when exhausted."""
    while True:
        perm = rng.permutation(n_target)
        for start in range(0, n_target, batch_size):
            chunk = perm[start:start + batch_size]
            if len(chunk) == batch_size or n_target < batch_size:
                yield chunk


def fit(cfg: TrainingConfig, source: DomainDataset, target: DomainDataset,
        diagnostics_fn=None):
    """Run the full training loop; returns (bundle, metrics rows).

    One epoch is one pass over the source set; target batches come from
    an independently shuffled cyclic stream. Target labels, if present,
    are used only for the per-epoch accuracy metric, never for gradients.
    """
    if source.labels is None:
        raise ContractError("fit requires a labeled source dataset")
    state = init_state(cfg)
    rng_s = np.random.default_rng([cfg.seed, 0])
    rng_t = np.random.default_rng([cfg.seed, 1])
    n = len(source)
    target_stream = _target_batches(len(target), cfg.batch_size, rng_t)

    rows = []
    for epoch in range(1, cfg.epochs + 1):
        perm = rng_s.permutation(n)
        sums = np.zeros(4)
        steps = 0
        state.disc_hits = state.disc_total = 0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            t_idx = next(target_stream)
            bd = train_step(state,
                            (source.features[idx], source.labels[idx]),
                            target.features[t_idx])
            sums += (bd.src_cls, bd.adv_dom, bd.cons, bd.total)
            steps += 1
        src_acc = evaluate(state.bundle, source)
        tgt_acc = evaluate(state.bundle, target) if target.labels is not None else float("nan")
        disc_acc = state.disc_hits / state.disc_total if state.disc_total else 0.5
        row = MetricsRow(epoch, *(sums / steps), src_acc, tgt_acc, disc_acc)
        if diagnostics_fn is not None:
            row.diagnostics = diagnostics_fn(state.bundle)
        rows.append(row)
    return state.bundle, rows
