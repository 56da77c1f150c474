"""
Module harness - experiment orchestration, result store, statistics and reports.

Features:
- Persisted, resumable stages: train-models, attack, detect, report
- Line-delimited trial results with resume by key
- Mean / sample-std summary cells, CSV, SVG panels, endpoint tables
- CLI subcommands (see commands.py)
"""

from .reports import emit_reports
from .schemas import DatasetConfig, ExperimentConfig, GridConfig, SummaryCell, TrialResult
from .service import STAGES, ExperimentRunner, run, summarize
from .store import ResultStore

__all__ = [
    "STAGES",
    "DatasetConfig",
    "ExperimentConfig",
    "ExperimentRunner",
    "GridConfig",
    "ResultStore",
    "SummaryCell",
    "TrialResult",
    "emit_reports",
    "run",
    "summarize",
]
