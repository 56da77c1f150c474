"""
The persisted stages of a run. Each stage reads what earlier stages wrote to
the output directory and skips work whose artifact already exists.

    models/attacked.mdl, models/rep_XXX.mdl      train-models
    attacks/{fgsm,bim,cw}.adv, attacks/stats.json attack
    results/trials.jsonl                          detect
"""
import json
from pathlib import Path
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np

from multidetect.core.errors import DataError
from multidetect.core.logging import get_logger
from multidetect.core.seeding import derive_seed
from multidetect.core.storage import write_atomic
from multidetect.core.workers import fan_out
from multidetect.modules.attacks import (
    ATTACK_ORDER,
    AdversarialSet,
    AttackKind,
    attack_population,
    attack_report,
    load_adversarial_set,
    save_adversarial_set,
)
from multidetect.modules.data import Dataset, load_cifar10, split_sources, stratified_subset, synthetic_splits
from multidetect.modules.data.pairs import select_sources
from multidetect.modules.detection import (
    Arm,
    PipelineConfig,
    PipelineKind,
    RepMatrix,
    build_pipeline,
    evaluate_all,
    extract_pairs,
)
from multidetect.modules.harness.schemas import ATTACKED_MODEL, ExperimentConfig, TrialResult
from multidetect.modules.harness.store import ResultStore
from multidetect.modules.models import Classifier, build_classifier, load_classifier, save_classifier, train

logger = get_logger(__name__)


# ========== LAYOUT ==========

class RunLayout:
    """Paths of every artifact under one output directory."""

    def __init__(self, root: Path):
        self.root = Path(root)

    @property
    def config(self) -> Path:
        return self.root / "config.json"

    def model(self, model_id: str) -> Path:
        return self.root / "models" / f"{model_id}.mdl"

    def attack(self, kind: AttackKind) -> Path:
        return self.root / "attacks" / f"{AttackKind(kind).value}.adv"

    @property
    def attack_stats(self) -> Path:
        return self.root / "attacks" / "stats.json"

    @property
    def trials(self) -> Path:
        return self.root / "results" / "trials.jsonl"

    @property
    def reports(self) -> Path:
        return self.root / "reports"


# ========== DATA ==========

def load_datasets(cfg: ExperimentConfig) -> Tuple[Dataset, Dataset]:
    source = cfg.dataset
    if source.source == "synthetic":
        train_set, test_set = synthetic_splits(source.synthetic, cfg.master_seed)
    else:
        train_set, test_set = load_cifar10(Path(source.path))
    if source.train_subset is not None:
        train_set = stratified_subset(train_set, source.train_subset)
    if source.test_subset is not None:
        test_set = stratified_subset(test_set, source.test_subset)
    if train_set.image_shape != cfg.arch.input_shape:
        raise DataError(f"dataset images {train_set.image_shape} do not match arch.input_shape {cfg.arch.input_shape}")
    if train_set.num_classes != cfg.arch.num_classes:
        raise DataError(f"dataset has {train_set.num_classes} classes, arch.num_classes is {cfg.arch.num_classes}")
    return train_set, test_set


# ========== TRAIN MODELS ==========

_train_state: Dict[str, object] = {}


def _install_training(cfg: ExperimentConfig, train_set: Dataset, test_set: Dataset, root: Path) -> None:
    _train_state.update(cfg=cfg, train=train_set, test=test_set, layout=RunLayout(root))


def _train_one(model_id: str) -> Tuple[str, float]:
    cfg: ExperimentConfig = _train_state["cfg"]
    layout: RunLayout = _train_state["layout"]
    classifier = build_classifier(cfg.arch, model_seed(cfg, model_id))
    train(classifier, _train_state["train"], cfg.train, _train_state["test"])
    save_classifier(layout.model(model_id), classifier)
    return model_id, classifier.metadata.final_test_accuracy


def model_seed(cfg: ExperimentConfig, model_id: str) -> int:
    return derive_seed(cfg.master_seed, "model", model_id)


def train_models(cfg: ExperimentConfig, layout: RunLayout, jobs: int = 1) -> List[str]:
    """Train the attacked model and the K representation models; returns the ids trained now."""
    wanted = [ATTACKED_MODEL] + cfg.model_ids
    missing = [m for m in wanted if not layout.model(m).exists()]
    if not missing:
        logger.info("All %d models already trained, skipping", len(wanted))
        return []
    train_set, test_set = load_datasets(cfg)
    logger.info("Training %d of %d models on %d images", len(missing), len(wanted), len(train_set))
    done = fan_out(
        _train_one,
        missing,
        jobs=jobs,
        initializer=_install_training,
        initargs=(cfg, train_set, test_set, layout.root),
        desc="train models",
    )
    for model_id, acc in done:
        logger.info("%s: test accuracy %.4f", model_id, acc)
    return missing


def load_population(cfg: ExperimentConfig, layout: RunLayout) -> Dict[str, Classifier]:
    return {model_id: load_classifier(layout.model(model_id)) for model_id in cfg.model_ids}


# ========== ATTACK ==========

def load_attack_sets(layout: RunLayout, kinds: Sequence[AttackKind] = ATTACK_ORDER) -> Dict[AttackKind, AdversarialSet]:
    return {AttackKind(k): load_adversarial_set(layout.attack(k)) for k in kinds}


def generate_attacks(cfg: ExperimentConfig, layout: RunLayout, jobs: int = 1) -> Dict[AttackKind, AdversarialSet]:
    """Attack the attacked model with every configured attack, then record transfer statistics."""
    attacked = None
    test_set = None
    sets: Dict[AttackKind, AdversarialSet] = {}
    for kind in ATTACK_ORDER:
        path = layout.attack(kind)
        if path.exists():
            logger.info("%s: reusing %s", kind.value, path)
            sets[kind] = load_adversarial_set(path)
            continue
        if attacked is None:
            attacked = load_classifier(layout.model(ATTACKED_MODEL))
            test_set = load_datasets(cfg)[1]
        sets[kind] = attack_population(
            attacked,
            test_set,
            cfg.attacks.get(kind),
            model_id=ATTACKED_MODEL,
            limit=cfg.dataset.attack_limit,
            jobs=jobs,
        )
        save_adversarial_set(path, sets[kind])
        logger.info("%s: wrote %d pairs to %s", kind.value, len(sets[kind]), path)

    if not layout.attack_stats.exists():
        population = list(load_population(cfg, layout).values())
        stats = {kind.value: attack_report(adv, population).model_dump(mode="json") for kind, adv in sets.items()}
        write_atomic(layout.attack_stats, (json.dumps(stats, indent=2, sort_keys=True) + "\n").encode("utf-8"))
        for kind, entry in stats.items():
            logger.info(
                "%s: population %d, attacked-model accuracy %.4f, transfer accuracy %.4f +- %.4f",
                kind, entry["population"], entry["attacked_model_accuracy"],
                entry["transfer_mean_accuracy"], entry["transfer_std_accuracy"],
            )
    return sets


# ========== DETECT ==========

TrialTask = Tuple[PipelineKind, AttackKind, int, int]

_detect_state: Dict[str, object] = {}


def _install_detection(cfg: ExperimentConfig, reps: Mapping[AttackKind, RepMatrix], sources: np.ndarray) -> None:
    _detect_state.update(cfg=cfg, reps=reps, sources=sources)


def trial_seed(cfg: ExperimentConfig, pipeline: PipelineKind, train_attack: AttackKind, n: int, trial: int) -> int:
    """Shared by both arms of a cell, so they draw the same models and detector seeds."""
    return derive_seed(cfg.master_seed, "trial", pipeline.value, train_attack.value, n, trial)


def arms_for(cfg: ExperimentConfig, pipeline: PipelineKind, n: int) -> List[Arm]:
    return [arm for arm in cfg.grid.arms if n in cfg.grid.n_values(pipeline, arm)]


def trial_tasks(cfg: ExperimentConfig) -> List[TrialTask]:
    grid = cfg.grid
    return [
        (pipeline, train_attack, n, trial)
        for pipeline in grid.pipelines
        for train_attack in grid.train_attacks
        for n in grid.all_n(pipeline)
        for trial in range(cfg.trials)
    ]


def task_keys(cfg: ExperimentConfig, task: TrialTask) -> List[Tuple]:
    pipeline, train_attack, n, trial = task
    return [
        (pipeline.value, arm.value, train_attack.value, test_attack.value, n, trial)
        for arm in arms_for(cfg, pipeline, n)
        for test_attack in cfg.grid.test_attacks
    ]


def run_trial(task: TrialTask) -> List[TrialResult]:
    """Both arms of one (pipeline, train attack, N, trial) cell against every test attack."""
    cfg: ExperimentConfig = _detect_state["cfg"]
    reps: Mapping[AttackKind, RepMatrix] = _detect_state["reps"]
    pipeline, train_attack, n, trial = task

    train_ids, test_ids = split_sources(
        _detect_state["sources"], cfg.test_fraction, derive_seed(cfg.master_seed, "split", trial)
    )
    train_reps = reps[train_attack].rows(np.isin(reps[train_attack].pair_ids, train_ids))
    test_reps = {
        kind.value: reps[kind].rows(np.isin(reps[kind].pair_ids, test_ids)) for kind in cfg.grid.test_attacks
    }
    seed = trial_seed(cfg, pipeline, train_attack, n, trial)

    results = []
    for arm in arms_for(cfg, pipeline, n):
        pipeline_cfg = PipelineConfig(
            kind=pipeline, arm=arm, n=n, pool=tuple(cfg.model_ids), trial_seed=seed, width=train_reps.width,
        )
        prob_fn = build_pipeline(pipeline_cfg, train_reps, cfg.detector)
        accuracies = evaluate_all(prob_fn, test_reps, train=train_reps, threshold=cfg.detector.threshold)
        for test_attack in cfg.grid.test_attacks:
            results.append(TrialResult(
                pipeline=pipeline,
                arm=arm,
                train_attack=train_attack,
                test_attack=test_attack,
                n=n,
                trial=trial,
                accuracy=accuracies[test_attack.value],
            ))
    return results


def detect(cfg: ExperimentConfig, layout: RunLayout, jobs: int = 1) -> ResultStore:
    """Run every pending trial of the grid, appending results as they complete."""
    store = ResultStore(layout.trials)
    tasks = [t for t in trial_tasks(cfg) if not all(key in store for key in task_keys(cfg, t))]
    if not tasks:
        logger.info("All %d trial results present, skipping", len(store))
        return store

    kinds = [k for k in ATTACK_ORDER if k in set(cfg.grid.train_attacks) | set(cfg.grid.test_attacks)]
    sets = load_attack_sets(layout, kinds)
    sources = sets[kinds[0]].pairs.source_index
    for kind in kinds[1:]:
        sources = np.intersect1d(sources, sets[kind].pairs.source_index)
    if sources.size < 2:
        raise DataError(f"only {sources.size} source image(s) shared by every attack set")

    population = load_population(cfg, layout)
    reps = {kind: extract_pairs(population, select_sources(sets[kind].pairs, sources)) for kind in kinds}
    logger.info(
        "Extracted %d-wide representations from %d models for %d pairs; %d trial task(s) pending",
        reps[kinds[0]].width, len(population), sources.size, len(tasks),
    )
    fan_out(
        run_trial,
        tasks,
        jobs=jobs,
        initializer=_install_detection,
        initargs=(cfg, reps, sources),
        desc="detection trials",
        on_result=store.append,
    )
    logger.info("Result store holds %d trial results", len(store))
    return store
