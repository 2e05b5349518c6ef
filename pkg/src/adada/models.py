"""Small MLPs: feature extractor, classifier head and domain discriminator.

The three networks live together in a ModelBundle. The discriminator's
sigmoid output is clamped to [1e-7, 1 - 1e-7] so the domain loss stays
finite even when it saturates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, DimensionError, ParseError

PROB_CLAMP = 1e-7

_ACTIVATIONS = {"relu": ad.relu, "tanh": ad.tanh}
_OUTPUT_ACTIVATIONS = ("none", "sigmoid", "softmax")


@dataclass(frozen=True)
class MlpSpec:
    layer_widths: tuple
    activation: str = "relu"
    output_activation: str = "none"

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 2:
            raise ConfigError("layer_widths needs at least input and output entries")
        if any(w < 1 for w in widths):
            raise ConfigError(f"all layer widths must be >= 1, got {widths}")
        if self.activation not in _ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.output_activation not in _OUTPUT_ACTIVATIONS:
            raise ConfigError(f"unknown output activation {self.output_activation!r}")


class Mlp:
    """Fully connected network over float64 tensors."""

    def __init__(self, spec: MlpSpec, weights, biases):
        self.spec = spec
        self.weights = list(weights)
        self.biases = list(biases)

    @classmethod
    def init(cls, spec: MlpSpec, seed: int) -> "Mlp":
        """Glorot-uniform weights (scale sqrt(6/(fan_in+fan_out))), zero biases."""
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(spec.layer_widths, spec.layer_widths[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            weights.append(Tensor(w, requires_grad=True))
            biases.append(Tensor(np.zeros(fan_out), requires_grad=True))
        return cls(spec, weights, biases)

    @property
    def input_dim(self) -> int:
        return self.spec.layer_widths[0]

    @property
    def output_dim(self) -> int:
        return self.spec.layer_widths[-1]

    def parameters(self) -> list:
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend((w, b))
        return params

    def forward(self, x: Tensor) -> Tensor:
        if not isinstance(x, Tensor):
            x = Tensor(x)
        if x.values.ndim != 2 or x.shape[1] != self.input_dim:
            raise DimensionError(
                f"expected input of shape (batch, {self.input_dim}), got {x.shape}")
        act = _ACTIVATIONS[self.spec.activation]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = ad.add(ad.matmul(h, w), b)
            if i < last:
                h = act(h)
        if self.spec.output_activation == "sigmoid":
            h = ad.sigmoid(h)
        elif self.spec.output_activation == "softmax":
            h = ad.softmax(h)
        return h


@dataclass(frozen=True)
class BundleSpec:
    """Architecture of the full three-network bundle."""

    feature_widths: tuple = (2, 32, 32, 8)
    classifier_widths: tuple = (8, 2)
    discriminator_widths: tuple = (8, 16, 1)
    activation: str = "relu"

    def __post_init__(self):
        for name in ("feature_widths", "classifier_widths", "discriminator_widths"):
            object.__setattr__(self, name, tuple(int(w) for w in getattr(self, name)))
        r = self.feature_widths[-1]
        if self.classifier_widths[0] != r or self.discriminator_widths[0] != r:
            raise ConfigError(
                "classifier and discriminator input widths must equal the "
                f"feature output width {r}")
        if self.discriminator_widths[-1] != 1:
            raise ConfigError("discriminator must end in a single sigmoid unit")


class ModelBundle:
    """Feature extractor f, classifier head, and domain discriminator d."""

    def __init__(self, feature_extractor: Mlp, classifier: Mlp, discriminator: Mlp):
        self.feature_extractor = feature_extractor
        self.classifier = classifier
        self.discriminator = discriminator

    @classmethod
    def build(cls, spec: BundleSpec, seed: int) -> "ModelBundle":
        fe = Mlp.init(MlpSpec(spec.feature_widths, spec.activation), np.random.default_rng([seed, 0]).integers(2**31))
        clf = Mlp.init(MlpSpec(spec.classifier_widths, spec.activation), np.random.default_rng([seed, 1]).integers(2**31))
        disc = Mlp.init(
            MlpSpec(spec.discriminator_widths, spec.activation, output_activation="sigmoid"),
            np.random.default_rng([seed, 2]).integers(2**31))
        return cls(fe, clf, disc)

    @property
    def spec(self) -> BundleSpec:
        return BundleSpec(
            feature_widths=self.feature_extractor.spec.layer_widths,
            classifier_widths=self.classifier.spec.layer_widths,
            discriminator_widths=self.discriminator.spec.layer_widths,
            activation=self.feature_extractor.spec.activation,
        )

    def theta_parameters(self) -> list:
        return self.feature_extractor.parameters() + self.classifier.parameters()

    def phi_parameters(self) -> list:
        return self.discriminator.parameters()

    def parameters(self) -> list:
        return self.theta_parameters() + self.phi_parameters()

    def named_parameters(self) -> dict:
        out = {}
        for prefix, net in (("feature_extractor", self.feature_extractor),
                            ("classifier", self.classifier),
                            ("discriminator", self.discriminator)):
            for i, (w, b) in enumerate(zip(net.weights, net.biases)):
                out[f"{prefix}.w{i}"] = w
                out[f"{prefix}.b{i}"] = b
        return out

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def parameter_bytes(self) -> bytes:
        """Concatenated raw parameter values; handy for mutation checks."""
        return b"".join(p.values.tobytes() for p in self.parameters())


def features(bundle: ModelBundle, x) -> Tensor:
    """Representation Z = f(x); differentiable w.r.t. parameters and x."""
    return bundle.feature_extractor.forward(x)


def class_logits(bundle: ModelBundle, x) -> Tensor:
    return bundle.classifier.forward(features(bundle, x))


def domain_prob_from_features(bundle: ModelBundle, z: Tensor) -> Tensor:
    """Discriminator probability, clamped so its log stays finite."""
    return ad.clamp(bundle.discriminator.forward(z), PROB_CLAMP, 1.0 - PROB_CLAMP)


def domain_prob(bundle: ModelBundle, x) -> Tensor:
    return domain_prob_from_features(bundle, features(bundle, x))


# ---------------------------------------------------------------------------
# checkpoint format: text, bit-exact via float hex

_CKPT_MAGIC = "adada-checkpoint v1"


def save_checkpoint(bundle: ModelBundle, path):
    spec = bundle.spec
    arch = {
        "feature_widths": list(spec.feature_widths),
        "classifier_widths": list(spec.classifier_widths),
        "discriminator_widths": list(spec.discriminator_widths),
        "activation": spec.activation,
    }
    lines = [_CKPT_MAGIC, json.dumps(arch, sort_keys=True)]
    for name, p in bundle.named_parameters().items():
        dims = " ".join(str(d) for d in p.shape)
        lines.append(f"param {name} {p.values.ndim} {dims}".rstrip())
        lines.append(" ".join(v.hex() for v in p.values.ravel()))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path) -> ModelBundle:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != _CKPT_MAGIC:
        raise ParseError(f"{path}: not a checkpoint file")
    arch = json.loads(lines[1])
    spec = BundleSpec(
        feature_widths=tuple(arch["feature_widths"]),
        classifier_widths=tuple(arch["classifier_widths"]),
        discriminator_widths=tuple(arch["discriminator_widths"]),
        activation=arch["activation"],
    )
    bundle = ModelBundle.build(spec, seed=0)
    params = bundle.named_parameters()
    i = 2
    while i < len(lines):
        head = lines[i].split()
        if head[0] != "param":
            raise ParseError(f"{path}: line {i + 1}: expected a param header")
        name, ndim = head[1], int(head[2])
        shape = tuple(int(d) for d in head[3:3 + ndim])
        vals = np.array([float.fromhex(tok) for tok in lines[i + 1].split()])
        if name not in params:
            raise ParseError(f"{path}: line {i + 1}: unknown parameter {name!r}")
        if vals.size != int(np.prod(shape)) or params[name].shape != shape:
            raise ParseError(f"{path}: line {i + 1}: shape mismatch for {name!r}")
        params[name].values = vals.reshape(shape)
        i += 2
    return bundle
