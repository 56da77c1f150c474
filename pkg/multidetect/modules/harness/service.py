"""
Experiment orchestration: the stage pipeline, the summary statistics and the
entry points used by the CLI.
"""
from collections import defaultdict
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, TypeVar

import numpy as np

from multidetect.core.errors import ConfigError, DataError, StageError
from multidetect.core.logging import get_logger
from multidetect.core.storage import write_atomic
from multidetect.modules.attacks.schemas import ATTACK_ORDER
from multidetect.modules.detection.schemas import Arm, PipelineKind
from multidetect.modules.harness import stages
from multidetect.modules.harness.reports import emit_reports
from multidetect.modules.harness.schemas import ExperimentConfig, SummaryCell, TrialResult
from multidetect.modules.harness.stages import RunLayout
from multidetect.modules.harness.store import ResultStore

logger = get_logger(__name__)

T = TypeVar("T")

STAGES = ("train-models", "attack", "detect", "report")

_PIPELINE_ORDER = list(PipelineKind)
_ARM_ORDER = [Arm.CONTROL, Arm.TREATMENT]


# ========== SUMMARY ==========

def _cell_order(cell: Tuple[str, str, str, str, int]) -> Tuple[int, int, int, int, int]:
    pipeline, arm, train_attack, test_attack, n = cell
    attacks = [k.value for k in ATTACK_ORDER]
    return (
        _PIPELINE_ORDER.index(PipelineKind(pipeline)),
        attacks.index(train_attack),
        attacks.index(test_attack),
        _ARM_ORDER.index(Arm(arm)),
        n,
    )


def summarize(results: Iterable[TrialResult], expected_trials: Optional[int] = None) -> List[SummaryCell]:
    """
    Mean and unbiased sample std per (pipeline, arm, train attack, test attack, N).
    Every cell must hold the same number of trials.
    """
    grouped: Dict[Tuple, List[float]] = defaultdict(list)
    for result in results:
        grouped[result.cell].append(result.accuracy)
    if not grouped:
        return []

    counts = {len(v) for v in grouped.values()}
    if len(counts) > 1:
        raise DataError(f"cells hold different trial counts: {sorted(counts)}")
    count = counts.pop()
    if expected_trials is not None and count != expected_trials:
        raise DataError(f"cells hold {count} trial(s), configuration expects {expected_trials}")

    cells = []
    for cell in sorted(grouped, key=_cell_order):
        values = np.asarray(grouped[cell], dtype=np.float64)
        pipeline, arm, train_attack, test_attack, n = cell
        cells.append(SummaryCell(
            pipeline=pipeline,
            arm=arm,
            train_attack=train_attack,
            test_attack=test_attack,
            n=n,
            mean=float(values.mean()),
            std=float(values.std(ddof=1)) if values.size > 1 else 0.0,
            trials=int(values.size),
            std_defined=bool(values.size > 1),
        ))
    return cells


# ========== RUNNER ==========

class ExperimentRunner:
    """Runs the stages of one experiment against one output directory."""

    def __init__(self, cfg: ExperimentConfig, jobs: int = 1):
        self.cfg = cfg
        self.jobs = max(1, int(jobs))
        self.layout = RunLayout(Path(cfg.output_dir))

    def _stage(self, name: str, fn: Callable[[], T]) -> T:
        logger.info("Stage %s: start", name)
        try:
            result = fn()
        except StageError:
            raise
        except Exception as e:
            logger.error("Stage %s failed: %s", name, e)
            raise StageError(name, e) from e
        logger.info("Stage %s: done", name)
        return result

    def check_config(self) -> None:
        """Refuse an output directory whose artifacts were produced by another configuration."""
        path = self.layout.config
        if not path.exists():
            return
        try:
            stored = ExperimentConfig.model_validate_json(path.read_text(encoding="utf-8"))
        except ValueError as e:
            raise ConfigError(f"{path} is not a readable experiment configuration: {e}") from e
        changed = config_changes(stored, self.cfg)
        if changed:
            raise ConfigError(
                f"{self.layout.root} holds a run with a different configuration "
                f"(changed: {', '.join(changed)}); use a fresh output directory"
            )

    def write_config(self) -> Path:
        payload = self.cfg.model_dump_json(indent=2) + "\n"
        write_atomic(self.layout.config, payload.encode("utf-8"))
        return self.layout.config

    # ========== STAGES ==========

    def train_models(self) -> List[str]:
        return self._stage("train-models", lambda: stages.train_models(self.cfg, self.layout, self.jobs))

    def attack(self):
        return self._stage("attack", lambda: stages.generate_attacks(self.cfg, self.layout, self.jobs))

    def detect(self) -> ResultStore:
        return self._stage("detect", lambda: stages.detect(self.cfg, self.layout, self.jobs))

    def report(self) -> List[Path]:
        def _report() -> List[Path]:
            store = ResultStore(self.layout.trials)
            summary = summarize(store.results(), self.cfg.trials)
            if not summary:
                raise DataError(f"no trial results in {self.layout.trials}; run the detect stage first")
            sets = None
            if all(self.layout.attack(k).exists() for k in ATTACK_ORDER):
                sets = stages.load_attack_sets(self.layout)
            return emit_reports(
                summary,
                self.layout.reports,
                attack_sets=sets,
                seed=self.cfg.master_seed,
                class_names=None if self.cfg.dataset.source == "cifar10" else _synthetic_names(self.cfg),
            )

        return self._stage("report", _report)

    def run(self, names: Sequence[str] = STAGES) -> ResultStore:
        unknown = [n for n in names if n not in STAGES]
        if unknown:
            raise ValueError(f"Unknown stage(s): {', '.join(unknown)}")
        self.check_config()
        self.write_config()
        for name in STAGES:
            if name in names:
                getattr(self, name.replace("-", "_"))()
        return ResultStore(self.layout.trials)


def config_changes(stored: ExperimentConfig, current: ExperimentConfig) -> List[str]:
    """Dotted names of the settings that differ; the output directory itself is ignored."""
    return _changed_keys(
        stored.model_dump(mode="json", exclude={"output_dir"}),
        current.model_dump(mode="json", exclude={"output_dir"}),
    )


def _changed_keys(old: Mapping[str, Any], new: Mapping[str, Any], prefix: str = "") -> List[str]:
    changed = []
    for key in sorted(set(old) | set(new)):
        left, right = old.get(key), new.get(key)
        if left == right:
            continue
        if isinstance(left, dict) and isinstance(right, dict):
            changed.extend(_changed_keys(left, right, f"{prefix}{key}."))
        else:
            changed.append(f"{prefix}{key}")
    return changed


def _synthetic_names(cfg: ExperimentConfig) -> List[str]:
    return [f"class {i}" for i in range(cfg.arch.num_classes)]


def run(cfg: ExperimentConfig, jobs: int = 1) -> ResultStore:
    """Every stage, end to end; completed stages are skipped."""
    return ExperimentRunner(cfg, jobs).run()
