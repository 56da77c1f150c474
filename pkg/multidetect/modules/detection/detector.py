"""
Binary adversarial detector: scikit-learn MLP with a 100-unit ReLU hidden
layer and a logistic output, trained on log-loss with Adam.
"""
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.exceptions import ConvergenceWarning
from sklearn.neural_network import MLPClassifier

from multidetect.core.errors import DataError, ShapeError
from multidetect.core.logging import get_logger
from multidetect.modules.detection.schemas import DetectorConfig

logger = get_logger(__name__)


@dataclass
class DetectorMetadata:
    input_width: int
    train_size: int
    epochs: int
    final_loss: float
    train_accuracy: float


@dataclass
class Detector:
    estimator: MLPClassifier
    seed: int
    metadata: DetectorMetadata

    def probability(self, features: np.ndarray) -> np.ndarray:
        """P(adversarial) per row, in [0, 1]."""
        features = np.asarray(features)
        if features.ndim != 2 or features.shape[1] != self.metadata.input_width:
            raise ShapeError(f"detector expects (B, {self.metadata.input_width}) features, got {features.shape}")
        column = int(np.flatnonzero(self.estimator.classes_ == 1)[0])
        return self.estimator.predict_proba(features)[:, column]


def build_estimator(cfg: DetectorConfig, train_size: int, seed: int) -> MLPClassifier:
    # early stopping off: n_iter_no_change equal to max_iter and tol 0
    return MLPClassifier(
        hidden_layer_sizes=(cfg.hidden_units,),
        activation="relu",
        solver="adam",
        alpha=cfg.l2_penalty,
        batch_size=min(cfg.batch_size, train_size),
        learning_rate_init=cfg.learning_rate,
        max_iter=cfg.max_epochs,
        shuffle=True,
        tol=0.0,
        n_iter_no_change=cfg.max_epochs,
        random_state=seed,
    )


def train_detector(
    features: np.ndarray,
    labels: np.ndarray,
    seed: int,
    cfg: DetectorConfig = DetectorConfig(),
) -> Detector:
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if features.ndim != 2 or labels.shape != (features.shape[0],):
        raise ShapeError(f"detector data: features {features.shape} vs labels {labels.shape}")
    classes = np.unique(labels)
    if classes.size < 2:
        raise DataError(f"detector training needs both clean and adversarial instances, got classes {classes.tolist()}")
    if not np.isin(classes, (0, 1)).all():
        raise DataError(f"detector labels must be 0/1, got {classes.tolist()}")

    estimator = build_estimator(cfg, features.shape[0], seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", category=ConvergenceWarning)
        estimator.fit(features, labels)

    metadata = DetectorMetadata(
        input_width=features.shape[1],
        train_size=features.shape[0],
        epochs=int(estimator.n_iter_),
        final_loss=float(estimator.loss_),
        train_accuracy=float(estimator.score(features, labels)),
    )
    logger.debug(
        "detector seed=%d width=%d: loss %.4f, train acc %.3f",
        seed, metadata.input_width, metadata.final_loss, metadata.train_accuracy,
    )
    return Detector(estimator=estimator, seed=seed, metadata=metadata)
