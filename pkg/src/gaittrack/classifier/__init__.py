"""Point-cloud / temporal-convolution classifier, trained from scratch."""

from gaittrack.classifier.network import (
    TcpcnModel,
    grad_check,
    loss,
    softmax,
)
from gaittrack.classifier.preprocess import (
    FeatureStats,
    augment,
    compute_feature_stats,
    fix_size,
    preprocess,
)
from gaittrack.classifier.quantize import dequantize_tensor, quantize, quantize_tensor
from gaittrack.classifier.serialize import load_model, save_model
from gaittrack.classifier.training import (
    Adam,
    TrainConfig,
    TrainingCorpus,
    TrainLog,
    evaluate_model,
    train,
)

__all__ = [
    "Adam",
    "FeatureStats",
    "TcpcnModel",
    "TrainConfig",
    "TrainLog",
    "TrainingCorpus",
    "augment",
    "compute_feature_stats",
    "dequantize_tensor",
    "evaluate_model",
    "fix_size",
    "grad_check",
    "load_model",
    "loss",
    "preprocess",
    "quantize",
    "quantize_tensor",
    "save_model",
    "softmax",
    "train",
]
