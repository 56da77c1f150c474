"""
Pair-preserving train/test splitting.
"""
import math
from typing import Tuple

import numpy as np

from multidetect.core.errors import DataError
from multidetect.core.seeding import derive_rng
from multidetect.modules.data.schemas import PairedSet


def count_test_pairs(total: int, test_fraction: float) -> int:
    """round(test_fraction * total), half up, kept within [1, total - 1]."""
    count = int(math.floor(test_fraction * total + 0.5))
    return min(max(count, 1), total - 1)


def split_sources(source_ids: np.ndarray, test_fraction: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Partition source ids into sorted (train ids, test ids)."""
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test_fraction must be in (0, 1), got {test_fraction}")
    source_ids = np.unique(np.asarray(source_ids, dtype=np.int64))
    if source_ids.shape[0] < 2:
        raise DataError(f"Need at least 2 pairs to split, got {source_ids.shape[0]}")
    order = derive_rng(seed, "pair_split").permutation(source_ids.shape[0])
    n_test = count_test_pairs(source_ids.shape[0], test_fraction)
    test_ids = np.sort(source_ids[order[:n_test]])
    train_ids = np.sort(source_ids[order[n_test:]])
    return train_ids, test_ids


def select_sources(pairs: PairedSet, ids: np.ndarray) -> PairedSet:
    """The pairs whose source image is in ``ids``, in ``pairs`` order."""
    return pairs.subset(np.flatnonzero(np.isin(pairs.source_index, ids)))


def pair_split(pairs: PairedSet, test_fraction: float, seed: int) -> Tuple[PairedSet, PairedSet]:
    """Pairs are assigned atomically; the two sides are disjoint and cover ``pairs``."""
    train_ids, test_ids = split_sources(pairs.source_index, test_fraction, seed)
    return select_sources(pairs, train_ids), select_sources(pairs, test_ids)
