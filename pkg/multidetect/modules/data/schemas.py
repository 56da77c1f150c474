"""
Dataset records and the 1/255 pixel grid helpers.
"""
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from multidetect.core.errors import DataError, shape_report

PIXEL_LEVELS = 255


# ========== PIXEL GRID ==========

def scale_bytes(values: np.ndarray) -> np.ndarray:
    """Byte values 0..255 -> float32 v/255.0 (computed in float64, then cast)."""
    return (np.asarray(values, dtype=np.float64) / float(PIXEL_LEVELS)).astype(np.float32)


def to_bytes(images: np.ndarray) -> np.ndarray:
    """Clip to [0, 1], then round(v * 255) half away from zero -> uint8."""
    clipped = np.clip(np.asarray(images, dtype=np.float64), 0.0, 1.0)
    return np.floor(clipped * PIXEL_LEVELS + 0.5).astype(np.uint8)


def quantize(images: np.ndarray) -> np.ndarray:
    """Clip and snap to the 256-level grid; idempotent."""
    return scale_bytes(to_bytes(images))


# ========== DATASETS ==========

@dataclass(frozen=True)
class Dataset:
    """Images (N, C, H, W) float32 in [0, 1] with integer labels in [0, num_classes)."""

    images: np.ndarray
    labels: np.ndarray
    split: str
    source: str
    num_classes: int = 10

    def __post_init__(self):
        if self.images.ndim != 4:
            raise DataError(f"images must be (N, C, H, W), got shape {self.images.shape}")
        if self.labels.shape != (self.images.shape[0],):
            raise DataError(shape_report("labels", (self.images.shape[0],), self.labels.shape))
        if self.images.size and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise DataError(f"{self.source}/{self.split}: pixel values outside [0, 1]")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DataError(f"{self.source}/{self.split}: labels outside [0, {self.num_classes})")

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def image_shape(self) -> Tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def subset(self, indices: np.ndarray) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(
            images=self.images[indices],
            labels=self.labels[indices],
            split=self.split,
            source=self.source,
            num_classes=self.num_classes,
        )


@dataclass(frozen=True)
class PairedSet:
    """
    Index-aligned clean/adversarial images; ``source_index`` identifies the
    originating image so pairs can be kept together.
    """

    clean: np.ndarray
    adversarial: np.ndarray
    source_index: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.clean.shape != self.adversarial.shape:
            raise DataError(shape_report("adversarial images", self.clean.shape, self.adversarial.shape))
        n = self.clean.shape[0]
        for name in ("source_index", "labels"):
            value = getattr(self, name)
            if value.shape != (n,):
                raise DataError(shape_report(name, (n,), value.shape))
        if len(np.unique(self.source_index)) != n:
            raise DataError("source_index must be unique per pair")

    def __len__(self) -> int:
        return int(self.clean.shape[0])

    def subset(self, indices: np.ndarray) -> "PairedSet":
        indices = np.asarray(indices, dtype=np.int64)
        return PairedSet(
            clean=self.clean[indices],
            adversarial=self.adversarial[indices],
            source_index=self.source_index[indices],
            labels=self.labels[indices],
        )

    def expand(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Two instances per pair: returns (instances, pair labels 0 clean / 1 adversarial,
        pair ids), clean block first.
        """
        n = len(self)
        instances = np.concatenate([self.clean, self.adversarial], axis=0)
        pair_labels = np.concatenate([np.zeros(n, dtype=np.int64), np.ones(n, dtype=np.int64)])
        pair_ids = np.concatenate([self.source_index, self.source_index]).astype(np.int64)
        return instances, pair_labels, pair_ids


class SyntheticSpec(BaseModel):
    """Class-conditional Gaussian-blob images."""

    model_config = ConfigDict(extra="forbid")

    num_classes: int = Field(default=10, ge=2)
    image_size: int = Field(default=32, ge=4)
    channels: int = Field(default=3, ge=1)
    samples_per_class: int = Field(default=100, ge=1)
    test_samples_per_class: int = Field(default=50, ge=1)
    noise: float = Field(default=0.08, ge=0.0)
