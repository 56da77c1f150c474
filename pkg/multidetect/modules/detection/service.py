"""
Representation extraction and the four detector pipelines.

Model-wise: one detector per representation model, probabilities averaged.
  treatment  N distinct models, detector i on model i's representations
  control    one model, N detectors (distinct seeds) on its representations
Unit-wise: one detector on an N-wide feature array.
  treatment  one random unit from each of N distinct models
  control    N distinct random units from one model

RNG paths (all from the trial seed):
  "models"            permutation of the pool; treatment takes a prefix,
                      control takes its first element
  "units"             unit indices for the unit-wise pipelines
  "detector", i       seed of detector i
so both arms make identical training calls when N = 1.
"""
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from multidetect.core.errors import ConfigError, DataError, ShapeError
from multidetect.core.logging import get_logger
from multidetect.core.seeding import derive_rng, derive_seed
from multidetect.modules.data.schemas import PairedSet
from multidetect.modules.detection.detector import Detector, train_detector
from multidetect.modules.detection.schemas import Arm, DetectorConfig, PipelineConfig, PipelineKind, RepMatrix
from multidetect.modules.models.architecture import Classifier
from multidetect.modules.models.service import penultimate

logger = get_logger(__name__)


# ========== EXTRACTION ==========

def extract(
    models: Mapping[str, Classifier],
    instances: np.ndarray,
    labels: Optional[np.ndarray] = None,
    pair_ids: Optional[np.ndarray] = None,
) -> RepMatrix:
    """Penultimate activations of every model on the same instances."""
    if not models:
        raise ShapeError("extract needs at least one model")
    archs = [m.arch for m in models.values() if m.arch is not None]
    if any(arch != archs[0] for arch in archs):
        raise ShapeError("representation models do not share one architecture")
    instances = np.asarray(instances)
    n = instances.shape[0] if instances.ndim == 4 else 1
    labels = np.zeros(n, dtype=np.int64) if labels is None else np.asarray(labels, dtype=np.int64)
    pair_ids = np.arange(n, dtype=np.int64) if pair_ids is None else np.asarray(pair_ids, dtype=np.int64)
    blocks = {model_id: penultimate(model, instances) for model_id, model in models.items()}
    return RepMatrix(blocks=blocks, labels=labels, pair_ids=pair_ids)


def extract_pairs(models: Mapping[str, Classifier], pairs: PairedSet) -> RepMatrix:
    """Both sides of every pair: clean rows first (label 0), then adversarial (label 1)."""
    instances, pair_labels, pair_ids = pairs.expand()
    return extract(models, instances, pair_labels, pair_ids)


def assert_pair_integrity(train: RepMatrix, test: RepMatrix) -> None:
    leaked = np.intersect1d(train.pair_ids, test.pair_ids)
    if leaked.size:
        raise DataError(f"{leaked.size} pair(s) appear in both detector training and test data")


# ========== PROBABILITY FUNCTIONS ==========

@dataclass
class ModelwiseEnsemble:
    """P = mean of the component detectors' probabilities."""

    members: List[Tuple[str, Detector]]

    def component_probabilities(self, reps: RepMatrix) -> np.ndarray:
        """(N, instances) matrix of component probabilities."""
        return np.stack([detector.probability(reps.block(model_id)) for model_id, detector in self.members])

    def __call__(self, reps: RepMatrix) -> np.ndarray:
        return self.component_probabilities(reps).astype(np.float64).mean(axis=0)


@dataclass
class UnitwiseDetector:
    """Single detector over units gathered from one or more models."""

    selection: List[Tuple[str, int]]
    detector: Detector

    def features(self, reps: RepMatrix) -> np.ndarray:
        return np.stack([reps.block(model_id)[:, unit] for model_id, unit in self.selection], axis=1)

    def __call__(self, reps: RepMatrix) -> np.ndarray:
        return self.detector.probability(self.features(reps))


ProbabilityFunction = Union[ModelwiseEnsemble, UnitwiseDetector]


# ========== PIPELINES ==========

def _permuted_pool(pool: Sequence[str], trial_seed: int) -> List[str]:
    order = derive_rng(trial_seed, "models").permutation(len(pool))
    return [pool[i] for i in order]


def modelwise(
    arm: Arm,
    n: int,
    pool: Sequence[str],
    reps: RepMatrix,
    trial_seed: int,
    cfg: DetectorConfig = DetectorConfig(),
) -> ModelwiseEnsemble:
    arm = Arm(arm)
    if n < 1:
        raise ConfigError(f"model-wise N must be >= 1, got {n}")
    if not pool:
        raise ConfigError("model-wise pipeline needs at least one representation model")
    if arm == Arm.TREATMENT and len(pool) < n:
        raise ConfigError(f"model-wise treatment needs N={n} models, pool has {len(pool)}")

    permuted = _permuted_pool(pool, trial_seed)
    chosen = permuted[:n] if arm == Arm.TREATMENT else [permuted[0]] * n
    members = []
    for i, model_id in enumerate(chosen):
        detector = train_detector(reps.block(model_id), reps.labels, derive_seed(trial_seed, "detector", i), cfg)
        members.append((model_id, detector))
    return ModelwiseEnsemble(members=members)


def select_units(
    arm: Arm,
    n: int,
    pool: Sequence[str],
    width: int,
    trial_seed: int,
) -> List[Tuple[str, int]]:
    """(model id, unit index) pairs that make up the unit-wise feature array."""
    arm = Arm(arm)
    if n < 1:
        raise ConfigError(f"unit-wise N must be >= 1, got {n}")
    if not pool:
        raise ConfigError("unit-wise pipeline needs at least one representation model")
    permuted = _permuted_pool(pool, trial_seed)
    rng = derive_rng(trial_seed, "units")
    if arm == Arm.TREATMENT:
        if len(pool) < n:
            raise ConfigError(f"unit-wise treatment needs N={n} models, pool has {len(pool)}")
        # one permutation per model; the first draw is the control arm's first unit
        units = [rng.permutation(width)[0] for _ in range(n)]
        return [(model_id, int(u)) for model_id, u in zip(permuted[:n], units)]
    if n > width:
        raise ConfigError(
            f"unit-wise control draws N={n} distinct units from one model of width R={width}; "
            f"use N <= {width} or widen the penultimate layer"
        )
    units = rng.permutation(width)[:n]
    return [(permuted[0], int(u)) for u in units]


def unitwise(
    arm: Arm,
    n: int,
    pool: Sequence[str],
    reps: RepMatrix,
    trial_seed: int,
    cfg: DetectorConfig = DetectorConfig(),
) -> UnitwiseDetector:
    selection = select_units(arm, n, pool, reps.width, trial_seed)
    features = np.stack([reps.block(model_id)[:, unit] for model_id, unit in selection], axis=1)
    detector = train_detector(features, reps.labels, derive_seed(trial_seed, "detector", 0), cfg)
    return UnitwiseDetector(selection=selection, detector=detector)


def build_pipeline(
    pipeline: PipelineConfig,
    reps: RepMatrix,
    cfg: DetectorConfig = DetectorConfig(),
) -> ProbabilityFunction:
    build = modelwise if pipeline.kind == PipelineKind.MODELWISE else unitwise
    logger.debug(
        "%s %s N=%d: %d detector(s), trial seed %d",
        pipeline.kind.value, pipeline.arm.value, pipeline.n, pipeline.detector_count, pipeline.trial_seed,
    )
    return build(pipeline.arm, pipeline.n, list(pipeline.pool), reps, pipeline.trial_seed, cfg)


# ========== EVALUATION ==========

def evaluate(prob_fn: ProbabilityFunction, reps: RepMatrix, threshold: float = 0.5) -> float:
    """Fraction of instances with (P > threshold) == adversarial label; P == threshold is clean."""
    if len(reps) == 0:
        raise DataError("cannot evaluate a detector on an empty test set")
    probabilities = np.asarray(prob_fn(reps))
    predicted = (probabilities > threshold).astype(np.int64)
    return float(np.mean(predicted == reps.labels))


def evaluate_all(
    prob_fn: ProbabilityFunction,
    test_sets: Mapping[str, RepMatrix],
    train: Optional[RepMatrix] = None,
    threshold: float = 0.5,
) -> Dict[str, float]:
    """Accuracy on each test set (one per attack), checking pair integrity against ``train``."""
    results = {}
    for name, reps in test_sets.items():
        if train is not None:
            assert_pair_integrity(train, reps)
        results[name] = evaluate(prob_fn, reps, threshold)
    return results
