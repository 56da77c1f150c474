import numpy as np
import pytest
from PIL import Image

from multidetect.core.errors import DataError, ShapeError, StorageError
from multidetect.modules.attacks import (
    AttackConfig,
    AttackKind,
    AttackSuiteConfig,
    CWParams,
    attack_population,
    attack_report,
    bim,
    cw_l2,
    fgsm,
    load_adversarial_set,
    postprocess,
    save_adversarial_set,
    save_grid,
    select_examples,
    transfer_eval,
)
from multidetect.modules.attacks import gradient as gradient_module
from multidetect.modules.data import Dataset
from multidetect.modules.diffcore import AdamConfig, AdamState, Graph, Tensor, adam_step, backward, run
from multidetect.modules.diffcore import ops
from multidetect.modules.models import Classifier, accuracy, build_classifier, predict, train

EPS = 3 / 255
HALF_LEVEL = 0.5 / 255


@pytest.fixture
def constant_gradient(monkeypatch):
    """Replace the loss gradient with a fixed array per call."""
    def install(grad):
        monkeypatch.setattr(gradient_module, "input_gradient", lambda model, x, y: np.broadcast_to(grad, x.shape))
    return install


@pytest.fixture(scope="module")
def fgsm_set(trained_classifier, tiny_data):
    return attack_population(trained_classifier, tiny_data[1], AttackConfig(kind=AttackKind.FGSM, epsilon=8 / 255))


@pytest.fixture(scope="module")
def population(tiny_arch, tiny_data, tiny_train_config):
    return [train(build_classifier(tiny_arch, seed), tiny_data[0], tiny_train_config) for seed in (21, 22, 23)]


def _linear_classifier(seed: int = 0):
    """2-d, 2-class linear model trained on two Gaussian blobs."""
    rng = np.random.default_rng(seed)
    x = np.concatenate([rng.normal(0.35, 0.05, (200, 2)), rng.normal(0.65, 0.05, (200, 2))]).astype(np.float32)
    y = np.repeat([0, 1], 200)
    graph = Graph((2,))
    graph.add_param("w", rng.normal(0.0, 0.1, (2, 2)))
    graph.add_param("b", np.zeros(2))
    graph.add_layer("dense", "logits", ["input"], ["w", "b"])
    state = AdamState()
    for _ in range(400):
        out = run(graph, Tensor(x))[graph.output]
        grads = backward(graph, ops.softmax_cross_entropy(out, y))
        adam_step(graph.params, grads.params, state, AdamConfig(lr=0.05))
    graph.set_requires_grad(False)
    return Classifier(graph=graph, arch=None, seed=seed)


# ========== FGSM / BIM ==========

def test_fgsm_moves_by_epsilon_sign(constant_gradient):
    constant_gradient(np.array([0.3, -2.0, 0.0, 1e-9]))
    x = np.full((1, 4), 0.5, dtype=np.float32)
    out = fgsm(None, x, np.array([0]), EPS)
    assert np.allclose(out, [[0.5 + EPS, 0.5 - EPS, 0.5, 0.5 + EPS]])


def test_fgsm_zero_epsilon_is_identity(trained_classifier, tiny_data):
    x = tiny_data[1].images[:4]
    assert np.array_equal(fgsm(trained_classifier, x, tiny_data[1].labels[:4], 0.0), x)


def test_fgsm_rejects_bad_labels(trained_classifier, tiny_data):
    with pytest.raises(ShapeError):
        fgsm(trained_classifier, tiny_data[1].images[:2], np.array([0, 99]), EPS)


def test_bim_saturates_at_budget(constant_gradient):
    constant_gradient(np.array([1.0, 1.0, -1.0]))
    x = np.array([[0.5, 0.995, 0.5]], dtype=np.float32)
    out = bim(None, x, np.array([0]), 1 / 255, 10, EPS)
    assert np.allclose(out, [[0.5 + EPS, 1.0, 0.5 - EPS]], atol=1e-6)


def test_bim_single_step_equals_clipped_fgsm(constant_gradient):
    constant_gradient(np.array([1.0, -1.0, 0.0, 1.0]))
    x = np.array([[0.2, 0.0, 0.7, 1.0]], dtype=np.float32)
    expected = np.clip(fgsm(None, x, np.array([0]), EPS), 0.0, 1.0)
    assert np.allclose(bim(None, x, np.array([0]), EPS, 1, EPS), expected)


def test_bim_step_larger_than_budget_rejected():
    with pytest.raises(ShapeError):
        bim(None, np.zeros((1, 2)), np.array([0]), 4 / 255, 3, EPS)
    with pytest.raises(ValueError):
        AttackConfig(kind=AttackKind.BIM, alpha=4 / 255, epsilon=EPS)


def test_bim_is_stronger_than_fgsm(trained_classifier, tiny_data):
    test_set = tiny_data[1]
    correct = predict(trained_classifier, test_set.images) == test_set.labels
    x, y = test_set.images[correct], test_set.labels[correct]
    # smallest budget at which single-step FGSM starts to bite
    for eps in (2 / 255, 4 / 255, 8 / 255, 16 / 255, 32 / 255, 64 / 255):
        fgsm_acc = accuracy(trained_classifier, fgsm(trained_classifier, x, y, eps), y)
        if fgsm_acc < 1.0:
            break
    bim_acc = accuracy(trained_classifier, bim(trained_classifier, x, y, eps / 4, 10, eps), y)
    assert 1.0 > fgsm_acc > bim_acc


def test_attack_suite_defaults():
    suite = AttackSuiteConfig()
    assert suite.bim.iterations == 10
    assert np.isclose(suite.fgsm.epsilon, 3 / 255)
    assert suite.cw.cw.confidence == 100
    with pytest.raises(ValueError):
        AttackSuiteConfig(fgsm=AttackConfig(kind=AttackKind.BIM))


# ========== POST-PROCESSING ==========

def test_postprocess_clips_and_quantizes(rng):
    raw = rng.uniform(-0.1, 1.1, size=(5, 3, 4, 4))
    out = postprocess(raw)
    assert out.min() >= 0.0 and out.max() <= 1.0
    assert np.allclose(out * 255, np.round(out * 255), atol=1e-4)
    assert np.array_equal(postprocess(out), out)


def test_population_is_on_grid_and_within_budget(fgsm_set, trained_classifier, tiny_data):
    pairs = fgsm_set.pairs
    levels = pairs.adversarial.astype(np.float64) * 255
    assert np.allclose(levels, np.round(levels), atol=1e-3)
    assert np.abs(pairs.adversarial - pairs.clean).max() <= 8 / 255 + HALF_LEVEL + 1e-6
    # only images the attacked model got right
    assert (predict(trained_classifier, pairs.clean) == pairs.labels).all()
    assert np.array_equal(tiny_data[1].images[pairs.source_index], pairs.clean)


def test_success_rate_matches_attacked_model_accuracy(fgsm_set, trained_classifier):
    acc = accuracy(trained_classifier, fgsm_set.pairs.adversarial, fgsm_set.pairs.labels)
    assert np.isclose(fgsm_set.success_rate, 1.0 - acc)
    report = attack_report(fgsm_set)
    assert report.population == len(fgsm_set)
    assert np.isclose(report.attacked_model_accuracy + report.success_rate, 1.0)


def test_attack_limit_restricts_candidates(trained_classifier, tiny_data):
    adv = attack_population(trained_classifier, tiny_data[1], AttackConfig(kind=AttackKind.FGSM), limit=10)
    assert adv.pairs.source_index.max() < 10


def test_empty_population_rejected(trained_classifier, tiny_data):
    test = tiny_data[1]
    wrong = (predict(trained_classifier, test.images) + 1) % test.num_classes
    mislabelled = Dataset(images=test.images, labels=wrong, split="test", source="synthetic", num_classes=test.num_classes)
    with pytest.raises(DataError):
        attack_population(trained_classifier, mislabelled, AttackConfig(kind=AttackKind.FGSM))


# ========== CARLINI-WAGNER ==========

def test_cw_matches_distance_to_linear_boundary():
    model = _linear_classifier()
    rng = np.random.default_rng(1)
    x = np.concatenate([rng.normal(0.35, 0.05, (40, 2)), rng.normal(0.65, 0.05, (40, 2))]).astype(np.float32)
    x = np.clip(x, 0.05, 0.95)
    y = predict(model, x)

    w = model.graph.params["w"].data.astype(np.float64)
    b = model.graph.params["b"].data.astype(np.float64)
    direction = w[:, 1] - w[:, 0]
    margin = np.abs(x.astype(np.float64) @ direction + (b[1] - b[0]))
    distance = margin / np.linalg.norm(direction)
    keep = distance > 0.05
    assert keep.sum() >= 50

    params = CWParams(learning_rate=0.01, binary_search_steps=6, max_iterations=300, confidence=0.0, initial_const=1.0)
    result = cw_l2(model, x[keep], y[keep], params)
    assert result.success.all()
    assert (predict(model, result.adversarial) != y[keep]).all()
    assert np.all(np.abs(result.l2 - distance[keep]) <= 0.1 * distance[keep])


def test_cw_on_already_misclassified_input_barely_moves():
    model = _linear_classifier()
    x = np.array([[0.3, 0.3]], dtype=np.float32)
    wrong = 1 - predict(model, x)
    result = cw_l2(model, x, wrong, CWParams(confidence=0.0, max_iterations=20, binary_search_steps=1))
    assert result.success.all()
    assert result.l2[0] < 1e-3


def test_cw_stays_in_box(trained_classifier, tiny_data):
    x = tiny_data[1].images[:3]
    result = cw_l2(trained_classifier, x, tiny_data[1].labels[:3], CWParams(max_iterations=5, binary_search_steps=2))
    assert result.adversarial.shape == x.shape
    assert result.adversarial.min() >= 0.0 and result.adversarial.max() <= 1.0
    assert result.success.shape == (3,)


# ========== TRANSFER ==========

def test_transfer_eval_mean_and_sample_std(fgsm_set, population):
    per_model = [accuracy(m, fgsm_set.pairs.adversarial, fgsm_set.pairs.labels) for m in population]
    mean, std = transfer_eval(population, fgsm_set)
    assert np.isclose(mean, np.mean(per_model))
    assert np.isclose(std, np.std(per_model, ddof=1))
    report = attack_report(fgsm_set, population)
    assert report.transfer_models == 3
    assert np.isclose(report.transfer_mean_accuracy, mean)


def test_transfer_eval_needs_two_models(fgsm_set, population):
    with pytest.raises(DataError):
        transfer_eval(population[:1], fgsm_set)


# ========== PERSISTENCE / GRID ==========

def test_adversarial_set_round_trip(fgsm_set, tmp_path):
    path = tmp_path / "fgsm.adv"
    save_adversarial_set(path, fgsm_set)
    loaded = load_adversarial_set(path)
    assert loaded.config == fgsm_set.config
    assert loaded.attacked_model == fgsm_set.attacked_model
    assert np.array_equal(loaded.pairs.clean, fgsm_set.pairs.clean)
    assert np.array_equal(loaded.pairs.adversarial, fgsm_set.pairs.adversarial)
    assert np.array_equal(loaded.pairs.source_index, fgsm_set.pairs.source_index)
    assert np.array_equal(loaded.fooled, fgsm_set.fooled)


def test_adversarial_set_rejects_classifier_file(tmp_path, trained_classifier):
    from multidetect.modules.models import save_classifier

    path = tmp_path / "model.mdl"
    save_classifier(path, trained_classifier)
    with pytest.raises(StorageError):
        load_adversarial_set(path)


def test_image_grid(fgsm_set, tmp_path):
    sets = {AttackKind.FGSM: fgsm_set, AttackKind.BIM: fgsm_set}
    rows = select_examples(sets, seed=3, class_names=["a", "b", "c"])
    assert [name for name, _ in rows] == sorted({"abc"[i] for i in fgsm_set.pairs.labels})
    assert all(len(images) == 3 for _, images in rows)
    assert [name for name, _ in select_examples(sets, seed=3, class_names=["a", "b", "c"])] == [n for n, _ in rows]

    path = tmp_path / "grid.png"
    save_grid(path, sets, seed=3, scale=4, class_names=["a", "b", "c"])
    with Image.open(path) as img:
        assert img.mode == "RGB"
        assert img.size[1] > len(rows) * 8 * 4
