from dataclasses import dataclass

import numpy as np
import pytest

from multidetect.core.errors import ConfigError, DataError, ShapeError
from multidetect.modules.data import PairedSet
from multidetect.modules.detection import (
    Arm,
    DetectorConfig,
    ModelwiseEnsemble,
    PipelineConfig,
    PipelineKind,
    RepMatrix,
    UnitwiseDetector,
    assert_pair_integrity,
    build_pipeline,
    evaluate,
    evaluate_all,
    extract,
    extract_pairs,
    modelwise,
    select_units,
    train_detector,
    unitwise,
)
from multidetect.modules.detection import service as detection_service
from multidetect.modules.models import build_classifier, penultimate

POOL = ("rep_000", "rep_001", "rep_002", "rep_003")
FAST = DetectorConfig(max_epochs=60, learning_rate=1e-2)


@dataclass
class ConstantDetector:
    value: float

    def probability(self, features):
        return np.full(features.shape[0], self.value)


class CoinFlip:
    def __init__(self, seed: int):
        self.rng = np.random.default_rng(seed)

    def __call__(self, reps):
        return self.rng.uniform(size=len(reps))


def _blobs(n: int, width: int, seed: int = 0, gap: float = 3.0):
    rng = np.random.default_rng(seed)
    clean = rng.normal(0.0, 1.0, (n, width))
    adv = rng.normal(gap, 1.0, (n, width))
    return np.concatenate([clean, adv]), np.repeat([0, 1], n)


def _reps(n: int = 60, width: int = 6, models=POOL, seed: int = 0) -> RepMatrix:
    rng = np.random.default_rng(seed)
    labels = np.repeat([0, 1], n)
    blocks = {m: rng.normal(size=(2 * n, width)) + labels[:, None] * 2.0 for m in models}
    return RepMatrix(blocks=blocks, labels=labels, pair_ids=np.tile(np.arange(n), 2))


@pytest.fixture
def recorded_training(monkeypatch):
    """Swap detector training for a recorder that returns constant detectors."""
    calls = []

    def fake_train(features, labels, seed, cfg=DetectorConfig()):
        calls.append((np.array(features, copy=True), np.array(labels, copy=True), seed))
        return ConstantDetector(0.25)

    monkeypatch.setattr(detection_service, "train_detector", fake_train)
    return calls


# ========== REPRESENTATIONS ==========

def test_extract_matches_penultimate(tiny_arch, tiny_data):
    models = {"a": build_classifier(tiny_arch, 1), "b": build_classifier(tiny_arch, 2)}
    images = tiny_data[1].images[:5]
    reps = extract(models, images)
    assert reps.model_ids == ("a", "b")
    assert reps.width == tiny_arch.penultimate_width
    assert np.array_equal(reps.block("a"), penultimate(models["a"], images))
    assert np.array_equal(reps.block("b"), penultimate(models["b"], images))


def test_extract_pairs_clean_rows_first(tiny_arch, tiny_data):
    images = tiny_data[1].images[:3]
    pairs = PairedSet(
        clean=images,
        adversarial=np.clip(images + 2 / 255, 0, 1),
        source_index=np.array([4, 9, 11]),
        labels=tiny_data[1].labels[:3],
    )
    reps = extract_pairs({"a": build_classifier(tiny_arch, 1)}, pairs)
    assert reps.labels.tolist() == [0, 0, 0, 1, 1, 1]
    assert reps.pair_ids.tolist() == [4, 9, 11, 4, 9, 11]


def test_extract_rejects_mixed_architectures(tiny_arch):
    other = tiny_arch.model_copy(update={"penultimate_width": 5})
    with pytest.raises(ShapeError):
        extract({"a": build_classifier(tiny_arch, 1), "b": build_classifier(other, 1)}, np.zeros((1, 3, 8, 8)))


def test_rep_matrix_rejects_ragged_blocks():
    with pytest.raises(ShapeError):
        RepMatrix({"a": np.zeros((4, 3)), "b": np.zeros((4, 2))}, np.zeros(4), np.arange(4))


def test_rows_keep_blocks_aligned():
    reps = _reps(n=5)
    picked = reps.rows(reps.labels == 1)
    assert len(picked) == 5
    assert np.array_equal(picked.block("rep_002"), reps.block("rep_002")[5:])


def test_pair_integrity():
    reps = _reps(n=10)
    train, test = reps.rows(reps.pair_ids < 8), reps.rows(reps.pair_ids >= 8)
    assert_pair_integrity(train, test)
    with pytest.raises(DataError):
        assert_pair_integrity(train, reps.rows(reps.pair_ids >= 7))


# ========== DETECTOR ==========

def test_detector_separates_blobs():
    x, y = _blobs(150, 4)
    detector = train_detector(x, y, seed=0, cfg=FAST)
    x_test, y_test = _blobs(100, 4, seed=1)
    accuracy = np.mean((detector.probability(x_test) > 0.5) == y_test)
    assert accuracy >= 0.95
    assert detector.metadata.train_accuracy >= 0.95


def test_detector_is_seed_deterministic():
    x, y = _blobs(50, 3, gap=1.0)
    a = train_detector(x, y, seed=4, cfg=FAST)
    b = train_detector(x, y, seed=4, cfg=FAST)
    for wa, wb in zip(a.estimator.coefs_, b.estimator.coefs_):
        assert np.array_equal(wa, wb)


def test_detector_needs_both_classes():
    with pytest.raises(DataError):
        train_detector(np.zeros((10, 2)), np.zeros(10), seed=0)


def test_detector_rejects_wrong_width():
    x, y = _blobs(20, 3)
    detector = train_detector(x, y, seed=0, cfg=FAST)
    with pytest.raises(ShapeError):
        detector.probability(np.zeros((2, 4)))


def test_detector_config_fixes_hidden_units():
    with pytest.raises(ValueError):
        DetectorConfig(hidden_units=50)


# ========== MODEL-WISE ==========

def test_ensemble_averages_components():
    reps = _reps(n=2, models=("a", "b", "c"))
    ensemble = ModelwiseEnsemble(
        members=[("a", ConstantDetector(0.2)), ("b", ConstantDetector(0.4)), ("c", ConstantDetector(0.6))],
    )
    assert ensemble.component_probabilities(reps).shape == (3, 4)
    assert np.allclose(ensemble(reps), 0.4)


def test_modelwise_treatment_uses_distinct_models(recorded_training):
    reps = _reps()
    ensemble = modelwise(Arm.TREATMENT, 3, POOL, reps, trial_seed=5)
    used = [model_id for model_id, _ in ensemble.members]
    assert len(set(used)) == 3
    assert len({seed for _, _, seed in recorded_training}) == 3


def test_modelwise_control_reuses_one_model(recorded_training):
    reps = _reps()
    ensemble = modelwise(Arm.CONTROL, 4, POOL, reps, trial_seed=5)
    assert len({model_id for model_id, _ in ensemble.members}) == 1
    assert len({seed for _, _, seed in recorded_training}) == 4
    assert all(np.array_equal(features, recorded_training[0][0]) for features, _, _ in recorded_training)


@pytest.mark.parametrize("kind", [PipelineKind.MODELWISE, PipelineKind.UNITWISE])
@pytest.mark.parametrize("trial_seed", [0, 17, 123456])
def test_arms_coincide_at_one(recorded_training, kind, trial_seed):
    reps = _reps()
    build = modelwise if kind == PipelineKind.MODELWISE else unitwise
    build(Arm.TREATMENT, 1, POOL, reps, trial_seed)
    build(Arm.CONTROL, 1, POOL, reps, trial_seed)
    (f_treat, y_treat, s_treat), (f_ctrl, y_ctrl, s_ctrl) = recorded_training
    assert np.array_equal(f_treat, f_ctrl)
    assert np.array_equal(y_treat, y_ctrl)
    assert s_treat == s_ctrl


def test_modelwise_treatment_needs_enough_models():
    with pytest.raises(ConfigError):
        modelwise(Arm.TREATMENT, 5, POOL, _reps(), trial_seed=0)


# ========== UNIT-WISE ==========

def test_treatment_units_come_from_distinct_models():
    selection = select_units(Arm.TREATMENT, 4, POOL, width=6, trial_seed=2)
    assert len({model_id for model_id, _ in selection}) == 4
    assert all(0 <= unit < 6 for _, unit in selection)


def test_control_units_are_distinct():
    selection = select_units(Arm.CONTROL, 5, POOL, width=6, trial_seed=2)
    assert len({model_id for model_id, _ in selection}) == 1
    assert len({unit for _, unit in selection}) == 5


def test_control_with_every_unit_is_a_permutation():
    selection = select_units(Arm.CONTROL, 6, POOL, width=6, trial_seed=9)
    assert sorted(unit for _, unit in selection) == list(range(6))


def test_control_wider_than_layer_rejected():
    with pytest.raises(ConfigError, match="R=6"):
        select_units(Arm.CONTROL, 7, POOL, width=6, trial_seed=0)
    with pytest.raises(ValueError):
        PipelineConfig(kind=PipelineKind.UNITWISE, arm=Arm.CONTROL, n=7, pool=POOL, trial_seed=0, width=6)


def test_unitwise_features_follow_selection(recorded_training):
    reps = _reps()
    detector = unitwise(Arm.TREATMENT, 2, POOL, reps, trial_seed=3)
    (m0, u0), (m1, u1) = detector.selection
    features = recorded_training[0][0]
    assert np.array_equal(features[:, 0], reps.block(m0)[:, u0])
    assert np.array_equal(features[:, 1], reps.block(m1)[:, u1])
    assert np.array_equal(detector.features(reps), features)


def test_build_pipeline_end_to_end():
    reps = _reps(n=80)
    train, test = reps.rows(reps.pair_ids < 60), reps.rows(reps.pair_ids >= 60)
    pipeline = PipelineConfig(kind=PipelineKind.UNITWISE, arm=Arm.TREATMENT, n=3, pool=POOL, trial_seed=1)
    prob_fn = build_pipeline(pipeline, train, FAST)
    assert isinstance(prob_fn, UnitwiseDetector)
    results = evaluate_all(prob_fn, {"fgsm": test}, train=train)
    assert results["fgsm"] > 0.8


# ========== EVALUATION ==========

def test_always_clean_scores_half_on_balanced_pairs():
    reps = _reps(n=10)
    assert evaluate(lambda r: np.zeros(len(r)), reps) == 0.5
    clean_only = reps.rows(reps.labels == 0)
    assert evaluate(lambda r: np.zeros(len(r)), clean_only) == 1.0


def test_threshold_value_counts_as_clean():
    reps = _reps(n=4)
    assert evaluate(lambda r: np.full(len(r), 0.5), reps.rows(reps.labels == 0)) == 1.0
    assert evaluate(lambda r: np.full(len(r), 0.5), reps.rows(reps.labels == 1)) == 0.0


def test_coin_flip_is_near_chance():
    reps = _reps(n=2000, width=1, models=("a",))
    assert abs(evaluate(CoinFlip(0), reps) - 0.5) < 0.03


def test_empty_test_set_rejected():
    reps = _reps(n=2)
    with pytest.raises(DataError):
        evaluate(lambda r: np.zeros(len(r)), reps.rows(np.zeros(4, dtype=bool)))
