"""Adversarial data augmentation for domain adaptation, desk scale.

A small numpy-backed library: reverse-mode autodiff core, MLP model
bundle (feature extractor, classifier, domain discriminator), FGSM/PGD
perturbation generators, domain-adversarial and consistency objectives,
a deterministic trainer, synthetic domain-shift benchmarks, and
information-theoretic diagnostics.
"""

from . import autodiff, datasets, diagnostics, models, objectives, perturb, trainer
from .autodiff import Tensor, backward
from .datasets import DomainDataset, ShiftSpec
from .models import BundleSpec, MlpSpec, ModelBundle
from .objectives import LossBreakdown, LossWeights
from .perturb import PerturbationConfig
from .trainer import MetricsRow, TrainingConfig, evaluate, fit

__version__ = "0.1.0"
