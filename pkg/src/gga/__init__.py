"""Gradient-geometry analysis for classifier trust assessment.

Computes per-class signed input gradients, summarizes their pairwise
cosine structure into fixed-length feature vectors, and flags inputs
whose geometry looks unlike the clean training distribution.
"""

__version__ = "0.1.0"

from .attacks import AttackConfig, AttackResult, parse_attack_spec, run_attack
from .data import LabeledDataset, gen_blobs, gen_digits, gen_noise, parse_dataset_spec
from .errors import (
    ActivationModeError,
    ContainerFormatError,
    DegenerateGeometryError,
    GgaError,
    IdxFormatError,
    NonFiniteGradientError,
    NumericalError,
    ShapeMismatchError,
    TrainingDivergenceError,
    UsageError,
)
from .features import FEATURE_NAMES, FeatureBatch, FeatureVector, extract, features
from .loda import LodaDetector, calibrate, fit, load_detector, save_detector
from .metrics import DetectionReport, auroc, aupr, evaluate, msp_score, tnr_at_tpr
from .nn import Model, TrainConfig, accuracy, load_model, save_model, train
from .saliency import Csm, SaliencyMap, cosine, csm, saliency

__all__ = [
    "__version__",
    "ActivationModeError", "AttackConfig", "AttackResult", "ContainerFormatError",
    "Csm", "DegenerateGeometryError", "DetectionReport", "FEATURE_NAMES",
    "FeatureBatch", "FeatureVector", "GgaError", "IdxFormatError",
    "LabeledDataset", "LodaDetector", "Model", "NonFiniteGradientError",
    "NumericalError", "SaliencyMap", "ShapeMismatchError", "TrainConfig",
    "TrainingDivergenceError", "UsageError",
    "accuracy", "auroc", "aupr", "calibrate", "cosine", "csm", "evaluate",
    "extract", "features", "fit", "gen_blobs", "gen_digits", "gen_noise",
    "load_detector", "load_model", "msp_score", "parse_attack_spec",
    "parse_dataset_spec", "run_attack", "saliency", "save_detector",
    "save_model", "tnr_at_tpr", "train",
]
