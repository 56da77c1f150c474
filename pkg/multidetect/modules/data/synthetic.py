"""
Synthetic stand-in for CIFAR-10: one coloured Gaussian blob per image, whose
position and colour depend on the class. Small enough for CI, separable by the
desk CNN.
"""
from typing import Tuple

import numpy as np

from multidetect.core.seeding import derive_rng
from multidetect.modules.data.schemas import Dataset, SyntheticSpec, quantize


def _class_prototypes(spec: SyntheticSpec, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Blob centres on a ring (one angle per class) and a random colour per class."""
    size = spec.image_size
    angles = 2.0 * np.pi * np.arange(spec.num_classes) / spec.num_classes
    radius = 0.28 * size
    centres = np.stack(
        [size / 2 + radius * np.sin(angles), size / 2 + radius * np.cos(angles)], axis=1
    )
    colours = derive_rng(seed, "synthetic", "colours").uniform(0.1, 0.9, (spec.num_classes, spec.channels))
    return centres, colours


def _render(spec: SyntheticSpec, labels: np.ndarray, centres, colours, rng: np.random.Generator) -> np.ndarray:
    size = spec.image_size
    sigma = size / 8.0
    grid = np.arange(size, dtype=np.float64)
    n = labels.shape[0]
    jitter = rng.uniform(-1.0, 1.0, (n, 2))
    cy = centres[labels, 0] + jitter[:, 0]
    cx = centres[labels, 1] + jitter[:, 1]
    blob = np.exp(
        -((grid[None, :, None] - cy[:, None, None]) ** 2 + (grid[None, None, :] - cx[:, None, None]) ** 2)
        / (2.0 * sigma ** 2)
    )
    background = 0.5
    images = background + blob[:, None, :, :] * (colours[labels][:, :, None, None] - background) * 1.6
    images = images + rng.normal(0.0, spec.noise, images.shape)
    return quantize(images)


def synthetic_dataset(spec: SyntheticSpec, seed: int, split: str = "train") -> Dataset:
    """Deterministic per (spec, seed, split); instances are shuffled."""
    per_class = spec.samples_per_class if split == "train" else spec.test_samples_per_class
    rng = derive_rng(seed, "synthetic", split)
    labels = np.repeat(np.arange(spec.num_classes, dtype=np.int64), per_class)
    labels = labels[rng.permutation(labels.shape[0])]
    centres, colours = _class_prototypes(spec, seed)
    images = _render(spec, labels, centres, colours, rng)
    return Dataset(
        images=images,
        labels=labels,
        split=split,
        source="synthetic",
        num_classes=spec.num_classes,
    )


def synthetic_splits(spec: SyntheticSpec, seed: int) -> Tuple[Dataset, Dataset]:
    return synthetic_dataset(spec, seed, "train"), synthetic_dataset(spec, seed, "test")
