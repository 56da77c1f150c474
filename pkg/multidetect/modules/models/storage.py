"""
Classifier persistence: magic, ArchConfig/seed/metadata header, little-endian
f32 parameter blobs in registry order. Round trips are bit-exact.
"""
from pathlib import Path

from multidetect.core.errors import StorageError
from multidetect.core.storage import load_container, save_container
from multidetect.modules.models.architecture import Classifier, build_classifier
from multidetect.modules.models.schemas import ArchConfig, TrainingMetadata

CLASSIFIER_MAGIC = b"MDCLSF01"


def save_classifier(path: Path, classifier: Classifier) -> None:
    if classifier.arch is None:
        raise StorageError("Only ArchConfig classifiers can be persisted")
    header = {
        "arch": classifier.arch.model_dump(mode="json"),
        "seed": classifier.seed,
        "metadata": classifier.metadata.model_dump(mode="json"),
    }
    save_container(path, CLASSIFIER_MAGIC, header, classifier.graph.state())


def load_classifier(path: Path) -> Classifier:
    header, blobs = load_container(path, CLASSIFIER_MAGIC)
    try:
        arch = ArchConfig.model_validate(header["arch"])
        seed = int(header["seed"])
        metadata = TrainingMetadata.model_validate(header["metadata"])
    except (KeyError, ValueError) as e:
        raise StorageError(f"{path}: bad classifier header: {e}")
    classifier = build_classifier(arch, seed)
    try:
        classifier.graph.load_state(blobs)
    except ValueError as e:
        raise StorageError(f"{path}: {e}")
    classifier.graph.set_requires_grad(False)
    classifier.metadata = metadata
    return classifier
