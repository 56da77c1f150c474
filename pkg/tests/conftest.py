import numpy as np
import pytest

from multidetect.core.config import settings
from multidetect.modules.data import SyntheticSpec, synthetic_splits
from multidetect.modules.models import ArchConfig, BlockSpec, TrainConfig, build_classifier, train


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow end-to-end tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def _no_progress_bars(monkeypatch):
    monkeypatch.setattr(settings, "PROGRESS", False)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_arch():
    return ArchConfig(
        input_shape=(3, 8, 8),
        stem_filters=4,
        blocks=(BlockSpec(filters=4, stride=1), BlockSpec(filters=8, stride=2)),
        kernel_size=3,
        penultimate_width=8,
        num_classes=3,
    )


@pytest.fixture(scope="session")
def tiny_spec():
    return SyntheticSpec(num_classes=3, image_size=8, samples_per_class=40, test_samples_per_class=20, noise=0.05)


@pytest.fixture(scope="session")
def tiny_data(tiny_spec):
    return synthetic_splits(tiny_spec, seed=7)


@pytest.fixture(scope="session")
def tiny_train_config():
    return TrainConfig(epochs=6, batch_size=16, learning_rate=5e-3, crop_padding=1, seed=3)


@pytest.fixture(scope="session")
def trained_classifier(tiny_arch, tiny_data, tiny_train_config):
    """A tiny classifier trained on the synthetic blobs; shared, treat as read-only."""
    train_set, test_set = tiny_data
    classifier = build_classifier(tiny_arch, seed=11)
    return train(classifier, train_set, tiny_train_config, test_set)
