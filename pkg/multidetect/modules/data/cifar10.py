"""
CIFAR-10 binary reader.

Each record is 3073 bytes: one label byte, then 3072 pixel bytes (1024 red,
1024 green, 1024 blue, each plane a row-major 32x32 image). Only bytes are
read, so parsing does not depend on host byte order.
"""
from pathlib import Path
from typing import Tuple

import numpy as np

from multidetect.core.errors import DataError
from multidetect.core.logging import get_logger
from multidetect.modules.data.schemas import Dataset, scale_bytes

logger = get_logger(__name__)

RECORD_SIZE = 3073
IMAGE_SHAPE = (3, 32, 32)
NUM_CLASSES = 10
TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
TEST_FILES = ("test_batch.bin",)
TRAIN_COUNT = 50_000
TEST_COUNT = 10_000
EXTRACTED_DIR = "cifar-10-batches-bin"

CLASS_NAMES = (
    "airplane", "automobile", "bird", "cat", "deer",
    "dog", "frog", "horse", "ship", "truck",
)


def parse_records(raw: bytes, name: str = "<bytes>") -> Tuple[np.ndarray, np.ndarray]:
    """Raw batch bytes -> (pixel bytes (n, 3, 32, 32) uint8, labels (n,) int64)."""
    if len(raw) % RECORD_SIZE:
        raise DataError(
            f"{name}: truncated record ({len(raw)} bytes is not a multiple of {RECORD_SIZE})"
        )
    records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, RECORD_SIZE)
    labels = records[:, 0].astype(np.int64)
    if labels.size and labels.max() >= NUM_CLASSES:
        bad = int(np.argmax(labels >= NUM_CLASSES))
        raise DataError(f"{name}: record {bad} has label byte {labels[bad]} > 9")
    pixels = records[:, 1:].reshape(-1, *IMAGE_SHAPE).copy()
    return pixels, labels


def read_batch(path: Path) -> Tuple[np.ndarray, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"Missing CIFAR-10 batch file: {path}")
    return parse_records(path.read_bytes(), name=path.name)


def _resolve(directory: Path) -> Path:
    directory = Path(directory)
    nested = directory / EXTRACTED_DIR
    return nested if nested.is_dir() else directory


def _load_split(directory: Path, files, split: str) -> Dataset:
    parts = [read_batch(directory / name) for name in files]
    pixels = np.concatenate([p for p, _ in parts], axis=0)
    labels = np.concatenate([lab for _, lab in parts], axis=0)
    return Dataset(
        images=scale_bytes(pixels),
        labels=labels,
        split=split,
        source="cifar10",
        num_classes=NUM_CLASSES,
    )


def load_cifar10(directory: Path, strict: bool = True) -> Tuple[Dataset, Dataset]:
    """
    Parse the six standard batch files under ``directory`` (or its
    ``cifar-10-batches-bin`` subfolder). With ``strict`` the split sizes must be
    exactly 50,000 / 10,000.
    """
    root = _resolve(directory)
    missing = [name for name in (*TRAIN_FILES, *TEST_FILES) if not (root / name).exists()]
    if missing:
        raise DataError(f"CIFAR-10 directory {root} is missing: {', '.join(missing)}")
    train = _load_split(root, TRAIN_FILES, "train")
    test = _load_split(root, TEST_FILES, "test")
    if strict and (len(train), len(test)) != (TRAIN_COUNT, TEST_COUNT):
        raise DataError(
            f"Expected {TRAIN_COUNT}/{TEST_COUNT} records, found {len(train)}/{len(test)}"
        )
    logger.info("Loaded CIFAR-10 from %s: %d train, %d test", root, len(train), len(test))
    return train, test


def stratified_subset(dataset: Dataset, count: int) -> Dataset:
    """First ``count // num_classes`` images of every class, in file order."""
    if count >= len(dataset):
        return dataset
    per_class = count // dataset.num_classes
    if per_class < 1:
        raise DataError(f"Subset of {count} is smaller than the class count {dataset.num_classes}")
    keep = []
    for label in range(dataset.num_classes):
        keep.append(np.flatnonzero(dataset.labels == label)[:per_class])
    return dataset.subset(np.sort(np.concatenate(keep)))
