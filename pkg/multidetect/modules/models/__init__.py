"""
Module models - desk classifier: architecture, training, inference, persistence.
"""

from .architecture import LOGITS, PENULTIMATE, Classifier, build_classifier
from .schemas import ArchConfig, BlockSpec, TrainConfig, TrainingMetadata
from .service import accuracy, input_gradient, logit_vjp, logits, penultimate, predict
from .storage import load_classifier, save_classifier
from .training import augment, train

__all__ = [
    "LOGITS",
    "PENULTIMATE",
    "ArchConfig",
    "BlockSpec",
    "Classifier",
    "TrainConfig",
    "TrainingMetadata",
    "accuracy",
    "augment",
    "build_classifier",
    "input_gradient",
    "load_classifier",
    "logit_vjp",
    "logits",
    "penultimate",
    "predict",
    "save_classifier",
    "train",
]
