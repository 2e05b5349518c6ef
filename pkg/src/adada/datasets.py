"""Synthetic domain-shift datasets and CSV serialization.

CSV format: header ``f0,...,f{d-1},label,domain``; label is empty for
unlabeled rows; domain is "source" or "target"; floats carry 12
significant digits.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import ContractError, ParseError

DOMAINS = ("source", "target")


@dataclass
class DomainDataset:
    features: np.ndarray          # (n, d) float64
    labels: Optional[np.ndarray]  # (n,) int64 or None
    domain: str = "source"
    name: str = ""

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ContractError(f"features must be 2-d, got shape {self.features.shape}")
        if not np.all(np.isfinite(self.features)):
            raise ContractError("features must be finite")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.features.shape[0],):
                raise ContractError("labels length must match sample count")
            if self.labels.size and self.labels.min() < 0:
                raise ContractError("labels must be non-negative class indices")
        if self.domain not in DOMAINS:
            raise ContractError(f"domain must be one of {DOMAINS}, got {self.domain!r}")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class ShiftSpec:
    rotation_degrees: float = 0.0
    translation: tuple = (0.0, 0.0)
    noise_sigma: float = 0.0

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ContractError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        object.__setattr__(self, "translation", tuple(float(t) for t in self.translation))


def two_moons(n: int, noise_sigma: float = 0.0, seed: int = 0) -> DomainDataset:
    """Two interleaved half-circles, n/2 points per class.

    Class 0 traces the upper unit arc (cos t, sin t); class 1 is the arc
    reflected and offset by (1, -0.5), i.e. (1 - cos t, 0.5 - sin t).
    """
    if n <= 0 or n % 2 != 0:
        raise ContractError(f"n must be a positive even integer, got {n}")
    half = n // 2
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, np.pi, half, endpoint=False)
    moon0 = np.column_stack([np.cos(t), np.sin(t)])
    moon1 = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])
    x = np.vstack([moon0, moon1])
    if noise_sigma > 0:
        x = x + rng.normal(scale=noise_sigma, size=x.shape)
    y = np.concatenate([np.zeros(half, dtype=np.int64), np.ones(half, dtype=np.int64)])
    return DomainDataset(x, y, domain="source", name=f"two_moons(n={n})")


def apply_shift(data: DomainDataset, shift: ShiftSpec, seed: int = 0) -> DomainDataset:
    """Rotate about the origin, translate, add fresh noise; labels kept."""
    theta = np.deg2rad(shift.rotation_degrees)
    c, s = np.cos(theta), np.sin(theta)
    if data.dim != 2:
        raise ContractError("apply_shift supports 2-d features only")
    rot = np.array([[c, -s], [s, c]])
    x = data.features @ rot.T + np.asarray(shift.translation)
    if shift.noise_sigma > 0:
        rng = np.random.default_rng(seed)
        x = x + rng.normal(scale=shift.noise_sigma, size=x.shape)
    labels = None if data.labels is None else data.labels.copy()
    return DomainDataset(x, labels, domain="target", name=f"{data.name}+shift")


def gaussian_blobs(centers, n_per_class: int, sigma: float, seed: int = 0) -> DomainDataset:
    """One isotropic Gaussian cluster per class center."""
    centers = np.asarray(centers, dtype=np.float64)
    if centers.ndim != 2 or centers.shape[0] < 2:
        raise ContractError("gaussian_blobs needs at least 2 centers")
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for c, center in enumerate(centers):
        pts = np.tile(center, (n_per_class, 1))
        if sigma > 0:
            pts = pts + rng.normal(scale=sigma, size=pts.shape)
        xs.append(pts)
        ys.append(np.full(n_per_class, c, dtype=np.int64))
    return DomainDataset(np.vstack(xs), np.concatenate(ys), domain="source",
                         name=f"gaussian_blobs(k={len(centers)})")


def strip_labels(data: DomainDataset) -> DomainDataset:
    return replace(data, labels=None)


# ---------------------------------------------------------------------------
# CSV round trip


def save_csv(data: DomainDataset, path):
    d = data.dim
    header = ",".join([f"f{i}" for i in range(d)] + ["label", "domain"])
    lines = [header]
    for i in range(len(data)):
        feats = ",".join(f"{v:.12g}" for v in data.features[i])
        label = "" if data.labels is None else str(int(data.labels[i]))
        lines.append(f"{feats},{label},{data.domain}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_csv(path) -> DomainDataset:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines()]
    if not lines:
        raise ParseError(f"{path}: empty file, expected a header row")
    header = lines[0].split(",")
    if len(header) < 3 or header[-2:] != ["label", "domain"]:
        raise ParseError(f"{path}: line 1: bad header {lines[0]!r}")
    d = len(header) - 2
    if header[:d] != [f"f{i}" for i in range(d)]:
        raise ParseError(f"{path}: line 1: bad feature columns in {lines[0]!r}")

    feats, labels, domains = [], [], []
    any_label = False
    for lineno, line in enumerate(lines[1:], start=2):
        if line == "":
            continue
        cells = line.split(",")
        if len(cells) != d + 2:
            raise ParseError(
                f"{path}: line {lineno}: expected {d + 2} columns, got {len(cells)}")
        try:
            feats.append([float(c) for c in cells[:d]])
        except ValueError:
            raise ParseError(f"{path}: line {lineno}: non-numeric feature value") from None
        if cells[d] == "":
            labels.append(-1)
        else:
            try:
                labels.append(int(cells[d]))
            except ValueError:
                raise ParseError(f"{path}: line {lineno}: non-integer label") from None
            any_label = True
        if cells[d + 1] not in DOMAINS:
            raise ParseError(f"{path}: line {lineno}: bad domain {cells[d + 1]!r}")
        domains.append(cells[d + 1])

    features = np.asarray(feats, dtype=np.float64).reshape(len(feats), d)
    if any_label:
        label_arr = np.asarray(labels, dtype=np.int64)
        if np.any(label_arr < 0):
            raise ParseError(f"{path}: mixed labeled and unlabeled rows")
    else:
        label_arr = None
    domain = domains[0] if domains else "source"
    return DomainDataset(features, label_arr, domain=domain, name=str(path))
