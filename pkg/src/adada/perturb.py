"""Norm-bounded adversarial perturbation generators (FGSM / PGD).

Source-side attacks ascend the classification loss. Target samples have
no labels, so their perturbations ascend the consistency objective
||f(x) - f(x + delta)||^2 with the clean representation held fixed
(virtual-adversarial style).

All generators return the perturbation delta (never the perturbed input)
and guarantee ||delta||_p <= epsilon per sample. Model parameters are
read-only; only their scratch gradients are touched.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from . import models
from .autodiff import Tensor
from .errors import ConfigError

_NORMS = ("linf", "l2")


@dataclass(frozen=True)
class PerturbationConfig:
    epsilon: float = 0.1
    norm: str = "linf"
    steps: int = 7
    step_size: Optional[float] = None  # default 2.5 * epsilon / steps
    random_init: bool = True
    clip_min: Optional[float] = None
    clip_max: Optional[float] = None

    def __post_init__(self):
        if self.epsilon < 0:
            raise ConfigError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.norm not in _NORMS:
            raise ConfigError(f"norm must be one of {_NORMS}, got {self.norm!r}")
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.step_size is not None and self.step_size <= 0:
            raise ConfigError(f"step_size must be > 0, got {self.step_size}")

    def resolved_step_size(self) -> float:
        if self.step_size is not None:
            return self.step_size
        return 2.5 * self.epsilon / self.steps


def project(delta: np.ndarray, cfg: PerturbationConfig) -> np.ndarray:
    """Project each row of delta onto the epsilon-ball of cfg.norm.

    Rows already inside the ball pass through unchanged.
    """
    delta = np.asarray(delta, dtype=np.float64)
    if cfg.norm == "linf":
        if np.all(np.abs(delta) <= cfg.epsilon):
            return delta
        return np.clip(delta, -cfg.epsilon, cfg.epsilon)
    norms = np.linalg.norm(delta, axis=-1, keepdims=True)
    over = norms > cfg.epsilon
    if not np.any(over):
        return delta
    factors = np.where(over, cfg.epsilon / np.where(over, norms, 1.0), 1.0)
    return delta * factors


def _loss_input_grad(bundle, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Gradient of the mean classification loss w.r.t. the input batch."""
    xt = Tensor(x, requires_grad=True)
    loss = ad.softmax_cross_entropy(models.class_logits(bundle, xt), y)
    ad.backward(loss)
    return xt.grad


def _ascent_direction(grad: np.ndarray, cfg: PerturbationConfig) -> np.ndarray:
    if cfg.norm == "linf":
        return np.sign(grad)
    norms = np.linalg.norm(grad, axis=-1, keepdims=True)
    return np.where(norms > 0, grad / np.where(norms > 0, norms, 1.0), 0.0)


def _random_start(shape, cfg: PerturbationConfig, rng: np.random.Generator) -> np.ndarray:
    if cfg.norm == "linf":
        return rng.uniform(-cfg.epsilon, cfg.epsilon, size=shape)
    # uniform in the l2 ball: direction on the sphere, radius ~ u^(1/d)
    d = shape[-1]
    direction = rng.standard_normal(size=shape)
    direction = _ascent_direction(direction, PerturbationConfig(epsilon=1.0, norm="l2"))
    radius = cfg.epsilon * rng.uniform(size=shape[:-1] + (1,)) ** (1.0 / d)
    return direction * radius


def _clip_to_domain(delta, x, cfg):
    if cfg.clip_min is None and cfg.clip_max is None:
        return delta
    return np.clip(x + delta, cfg.clip_min, cfg.clip_max) - x


def fgsm(bundle, x: np.ndarray, y: np.ndarray, cfg: PerturbationConfig) -> np.ndarray:
    """Single-step sign attack: delta = epsilon * sign(d loss / d x).

    sign(0) is 0, so coordinates with exactly zero gradient stay untouched.
    """
    if cfg.norm != "linf":
        raise ConfigError("fgsm is defined for the linf norm only")
    x = np.asarray(x, dtype=np.float64)
    if cfg.epsilon == 0:
        return np.zeros_like(x)
    delta = cfg.epsilon * np.sign(_loss_input_grad(bundle, x, y))
    return _clip_to_domain(delta, x, cfg)


def pgd(bundle, x: np.ndarray, y: np.ndarray, cfg: PerturbationConfig,
        rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Projected gradient ascent on the classification loss."""
    x = np.asarray(x, dtype=np.float64)
    if cfg.epsilon == 0:
        return np.zeros_like(x)
    if cfg.random_init:
        rng = rng if rng is not None else np.random.default_rng(0)
        delta = _random_start(x.shape, cfg, rng)
    else:
        delta = np.zeros_like(x)
    alpha = cfg.resolved_step_size()
    for _ in range(cfg.steps):
        grad = _loss_input_grad(bundle, x + delta, y)
        delta = project(delta + alpha * _ascent_direction(grad, cfg), cfg)
        delta = _clip_to_domain(delta, x, cfg)
    return delta


def target_perturb(bundle, x: np.ndarray, cfg: PerturbationConfig,
                   rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Label-free attack: ascend ||f(x) - f(x + delta)||^2.

    The clean representation is treated as a constant during the ascent,
    otherwise the attack could trivially move both branches at once.
    """
    x = np.asarray(x, dtype=np.float64)
    if cfg.epsilon == 0:
        return np.zeros_like(x)
    z_clean = models.features(bundle, Tensor(x)).values  # constant snapshot
    if cfg.random_init:
        rng = rng if rng is not None else np.random.default_rng(0)
        delta = _random_start(x.shape, cfg, rng)
    else:
        delta = np.zeros_like(x)
    alpha = cfg.resolved_step_size()
    b = x.shape[0]
    for _ in range(cfg.steps):
        xt = Tensor(x + delta, requires_grad=True)
        diff = ad.sub(models.features(bundle, xt), Tensor(z_clean))
        loss = ad.scale(ad.tsum(ad.square(diff)), 1.0 / b)
        ad.backward(loss)
        delta = project(delta + alpha * _ascent_direction(xt.grad, cfg), cfg)
        delta = _clip_to_domain(delta, x, cfg)
    return delta
