"""
Module detection - representation extraction and multi-model detector pipelines.

Features:
- Penultimate-layer representations across a model population (RepMatrix)
- Binary MLP detectors (scikit-learn)
- Model-wise ensembles and unit-wise feature arrays, treatment and control arms
- Thresholded accuracy with pair-integrity checks
"""

from .detector import Detector, DetectorMetadata, train_detector
from .schemas import Arm, DetectorConfig, PipelineConfig, PipelineKind, RepMatrix
from .service import (
    ModelwiseEnsemble,
    UnitwiseDetector,
    assert_pair_integrity,
    build_pipeline,
    evaluate,
    evaluate_all,
    extract,
    extract_pairs,
    modelwise,
    select_units,
    unitwise,
)

__all__ = [
    "Arm",
    "Detector",
    "DetectorConfig",
    "DetectorMetadata",
    "ModelwiseEnsemble",
    "PipelineConfig",
    "PipelineKind",
    "RepMatrix",
    "UnitwiseDetector",
    "assert_pair_integrity",
    "build_pipeline",
    "evaluate",
    "evaluate_all",
    "extract",
    "extract_pairs",
    "modelwise",
    "select_units",
    "train_detector",
    "unitwise",
]
