"""
Module data - CIFAR-10 ingestion, synthetic fallback, pair-preserving splits.
"""

from .cifar10 import CLASS_NAMES, load_cifar10, stratified_subset
from .pairs import pair_split, split_sources
from .schemas import Dataset, PairedSet, SyntheticSpec, quantize, scale_bytes, to_bytes
from .synthetic import synthetic_dataset, synthetic_splits

__all__ = [
    "CLASS_NAMES",
    "Dataset",
    "PairedSet",
    "SyntheticSpec",
    "load_cifar10",
    "pair_split",
    "quantize",
    "scale_bytes",
    "split_sources",
    "stratified_subset",
    "synthetic_dataset",
    "synthetic_splits",
    "to_bytes",
]
