import json
from pathlib import Path

import numpy as np
import pytest

from multidetect.core.config import load_experiment_config
from multidetect.core.errors import ConfigError, DataError, StageError, StorageError
from multidetect.main import main
from multidetect.modules.attacks import AttackKind
from multidetect.modules.detection import Arm, PipelineKind
from multidetect.modules.harness import (
    ExperimentConfig,
    ExperimentRunner,
    ResultStore,
    TrialResult,
    emit_reports,
    summarize,
)
from multidetect.modules.harness.commands import parse_dataset
from multidetect.modules.harness.service import config_changes
from multidetect.modules.harness.stages import arms_for, task_keys, trial_seed, trial_tasks

ATTACKS = list(AttackKind)


def _result(accuracy: float, trial: int = 0, n: int = 1, arm: Arm = Arm.TREATMENT, **kw) -> TrialResult:
    fields = dict(
        pipeline=PipelineKind.MODELWISE,
        arm=arm,
        train_attack=AttackKind.FGSM,
        test_attack=AttackKind.BIM,
        n=n,
        trial=trial,
        accuracy=accuracy,
    )
    fields.update(kw)
    return TrialResult(**fields)


def _full_grid(trials: int = 2):
    """Every (pipeline, arm, train, test, N) cell with fixed accuracies."""
    results = []
    for pipeline in PipelineKind:
        for arm in Arm:
            for train_attack in ATTACKS:
                for test_attack in ATTACKS:
                    for n in (1, 4):
                        for trial in range(trials):
                            results.append(_result(
                                0.5 + 0.1 * trial + 0.01 * n, trial=trial, n=n, arm=arm,
                                pipeline=pipeline, train_attack=train_attack, test_attack=test_attack,
                            ))
    return results


def _tiny_experiment(out_dir: Path, seed: int = 0) -> ExperimentConfig:
    return load_experiment_config(None, {
        "output_dir": str(out_dir),
        "master_seed": seed,
        "population_size": 2,
        "trials": 1,
        "test_fraction": 0.25,
        "dataset": {
            "source": "synthetic",
            "attack_limit": 40,
            "synthetic": {"num_classes": 3, "image_size": 8, "samples_per_class": 30, "test_samples_per_class": 15},
        },
        "arch": {
            "input_shape": [3, 8, 8],
            "stem_filters": 4,
            "blocks": [{"filters": 4, "stride": 1}, {"filters": 8, "stride": 2}],
            "penultimate_width": 8,
            "num_classes": 3,
        },
        "train": {"epochs": 3, "batch_size": 16, "learning_rate": 5e-3, "crop_padding": 1},
        "attacks": {"cw": {"kind": "cw", "cw": {"max_iterations": 10, "binary_search_steps": 2}}},
        "grid": {"modelwise_n": [1, 2], "unitwise_control_n": [1, 2], "unitwise_treatment_n": [1, 2]},
        "detector": {"max_epochs": 20},
    })


# ========== SUMMARY ==========

def test_two_trials_mean_and_sample_std():
    [cell] = summarize([_result(0.5, 0), _result(0.7, 1)])
    assert np.isclose(cell.mean, 0.6)
    assert np.isclose(cell.std, 0.1414, atol=1e-4)
    assert cell.trials == 2 and cell.std_defined


def test_single_trial_has_undefined_std():
    [cell] = summarize([_result(0.9)])
    assert cell.std == 0.0
    assert not cell.std_defined


def test_unequal_trial_counts_rejected():
    results = [_result(0.5, 0, n=1), _result(0.6, 1, n=1), _result(0.5, 0, n=2)]
    with pytest.raises(DataError):
        summarize(results)
    with pytest.raises(DataError):
        summarize([_result(0.5, 0)], expected_trials=3)


def test_summary_order_is_stable():
    results = _full_grid()
    forward, backward = summarize(results), summarize(list(reversed(results)))
    assert [c.model_dump() for c in forward] == [c.model_dump() for c in backward]
    assert forward[0].pipeline == PipelineKind.MODELWISE
    assert forward[0].arm == Arm.CONTROL


# ========== RESULT STORE ==========

def test_store_resumes_by_key(tmp_path):
    path = tmp_path / "results" / "trials.jsonl"
    store = ResultStore(path)
    assert store.append([_result(0.5, 0), _result(0.6, 1)]) == 2
    reopened = ResultStore(path)
    assert len(reopened) == 2
    assert _result(0.0, 1).key in reopened
    assert reopened.append([_result(0.9, 1), _result(0.7, 2)]) == 1
    assert [r.accuracy for r in ResultStore(path).results()] == [0.5, 0.6, 0.7]


def test_store_drops_partial_last_line(tmp_path):
    path = tmp_path / "trials.jsonl"
    ResultStore(path).append([_result(0.5, 0)])
    with open(path, "a", encoding="utf-8") as f:
        f.write('{"pipeline": "model-wise", "arm"')
    store = ResultStore(path)
    assert len(store) == 1
    assert path.read_text(encoding="utf-8").count("\n") == 1


def test_store_rejects_corrupt_line(tmp_path):
    path = tmp_path / "trials.jsonl"
    path.write_text('{"not": "a trial"}\n', encoding="utf-8")
    with pytest.raises(StorageError):
        ResultStore(path)


# ========== REPORTS ==========

def test_reports_cover_every_panel(tmp_path):
    summary = summarize(_full_grid())
    written = emit_reports(summary, tmp_path)
    assert len(list(tmp_path.glob("*.svg"))) == 2 * len(ATTACKS) ** 2
    assert (tmp_path / "model-wise_fgsm_bim.svg") in written

    lines = (tmp_path / "summary.csv").read_text().splitlines()
    assert lines[0] == "pipeline,arm,train_attack,test_attack,N,mean,std,trials"
    assert len(lines) == 1 + len(summary)
    assert lines[1].startswith("model-wise,control,fgsm,fgsm,1,0.560000,0.070711,2")

    endpoints = (tmp_path / "endpoints.md").read_text()
    assert "## model-wise" in endpoints and "## unit-wise" in endpoints


def test_reports_are_byte_identical(tmp_path):
    summary = summarize(_full_grid())
    emit_reports(summary, tmp_path / "a")
    emit_reports(summary, tmp_path / "b")
    for path in sorted((tmp_path / "a").iterdir()):
        assert path.read_bytes() == (tmp_path / "b" / path.name).read_bytes(), path.name


def test_empty_summary_rejected(tmp_path):
    with pytest.raises(ValueError):
        emit_reports([], tmp_path)


# ========== CONFIGURATION ==========

def test_unknown_key_rejected(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"trials": 2, "trails": 3}))
    with pytest.raises(ConfigError, match="trails"):
        load_experiment_config(path)


def test_population_must_cover_largest_n():
    with pytest.raises(ConfigError):
        load_experiment_config(None, {"population_size": 8})


def test_unit_control_bounded_by_width():
    with pytest.raises(ConfigError, match="R=8"):
        load_experiment_config(None, {
            "arch": {"penultimate_width": 8},
            "grid": {"unitwise_control_n": [4, 16], "unitwise_treatment_n": [4, 16]},
        })


def test_cifar_source_needs_path():
    with pytest.raises(ConfigError):
        load_experiment_config(None, {"dataset": {"source": "cifar10"}})


def test_dataset_option():
    assert parse_dataset("cifar10:/data/cifar") == {"source": "cifar10", "path": "/data/cifar"}
    with pytest.raises(ConfigError):
        parse_dataset("imagenet")


def test_defaults():
    cfg = ExperimentConfig()
    assert cfg.population_size == 64
    assert cfg.trials == 20
    assert cfg.grid.all_n(PipelineKind.MODELWISE) == (1, 2, 4, 8, 16)
    assert cfg.model_ids[:2] == ["rep_000", "rep_001"]


def test_output_dir_bound_to_its_config(tmp_path):
    ExperimentRunner(_tiny_experiment(tmp_path, seed=0)).write_config()
    ExperimentRunner(_tiny_experiment(tmp_path, seed=0)).check_config()

    changed = _tiny_experiment(tmp_path, seed=1).model_copy(update={"trials": 2})
    with pytest.raises(ConfigError, match="master_seed, trials"):
        ExperimentRunner(changed).run(["train-models"])
    assert json.loads((tmp_path / "config.json").read_text())["master_seed"] == 0
    assert not (tmp_path / "models").exists()


def test_nested_config_changes_are_named(tmp_path):
    stored = _tiny_experiment(tmp_path)
    moved = stored.model_copy(update={"output_dir": str(tmp_path / "elsewhere")})
    assert config_changes(stored, moved) == []
    wider = _tiny_experiment(tmp_path).model_copy(
        update={"arch": stored.arch.model_copy(update={"penultimate_width": 16})}
    )
    assert config_changes(stored, wider) == ["arch.penultimate_width"]


def test_reused_output_dir_is_usage_error(tmp_path):
    ExperimentRunner(_tiny_experiment(tmp_path, seed=0)).write_config()
    assert main(["train-models", "--out", str(tmp_path), "--seed", "3"]) == 1


# ========== TRIAL GRID ==========

def test_trial_tasks_and_keys(tmp_path):
    cfg = _tiny_experiment(tmp_path)
    tasks = trial_tasks(cfg)
    assert len(tasks) == 2 * len(ATTACKS) * 2 * cfg.trials
    keys = task_keys(cfg, tasks[0])
    assert len(keys) == len(arms_for(cfg, tasks[0][0], tasks[0][2])) * len(ATTACKS)


def test_trial_seed_ignores_arm_but_not_n(tmp_path):
    cfg = _tiny_experiment(tmp_path)
    a = trial_seed(cfg, PipelineKind.UNITWISE, AttackKind.CW, 1, 0)
    assert a == trial_seed(cfg, PipelineKind.UNITWISE, AttackKind.CW, 1, 0)
    assert a != trial_seed(cfg, PipelineKind.UNITWISE, AttackKind.CW, 2, 0)


# ========== CLI ==========

def test_describe(capsys):
    assert main(["describe"]) == 0
    out = capsys.readouterr().out
    assert "parameters per model: 22282" in out


def test_version(capsys):
    assert main(["--version"]) == 0
    assert capsys.readouterr().out.strip() == "multidetect 1.0.0"


def test_bad_dataset_is_usage_error():
    assert main(["describe", "--dataset", "imagenet"]) == 1


def test_unknown_command_is_usage_error():
    assert main(["frobnicate"]) == 1


def test_report_without_trials_is_data_error(tmp_path):
    assert main(["report", "--out", str(tmp_path)]) == 2


def test_missing_dataset_dir_is_data_error(tmp_path):
    code = main(["train-models", "--out", str(tmp_path / "run"), "--dataset", f"cifar10:{tmp_path / 'nope'}"])
    assert code == 2


def test_stage_errors_name_the_stage(tmp_path):
    runner = ExperimentRunner(_tiny_experiment(tmp_path))
    with pytest.raises(StageError, match="report"):
        runner.report()


# ========== END TO END ==========

@pytest.mark.slow
def test_tiny_run_is_deterministic(tmp_path):
    cfg = _tiny_experiment(tmp_path / "a", seed=5)
    first = ExperimentRunner(cfg).run()
    second = ExperimentRunner(_tiny_experiment(tmp_path / "b", seed=5)).run()

    expected = sum(len(task_keys(cfg, task)) for task in trial_tasks(cfg))
    assert len(first) == expected
    assert [r.model_dump() for r in first.results()] == [r.model_dump() for r in second.results()]

    reports = tmp_path / "a" / "reports"
    assert (reports / "attacked_images.png").exists()
    assert (reports / "summary.csv").read_bytes() == (tmp_path / "b" / "reports" / "summary.csv").read_bytes()

    stats = json.loads((tmp_path / "a" / "attacks" / "stats.json").read_text())
    assert set(stats) == {"fgsm", "bim", "cw"}
    assert stats["fgsm"]["transfer_models"] == 2


@pytest.mark.slow
def test_rerun_skips_completed_stages(tmp_path):
    cfg = _tiny_experiment(tmp_path)
    runner = ExperimentRunner(cfg)
    runner.run()
    trials = (tmp_path / "results" / "trials.jsonl").read_bytes()
    assert runner.train_models() == []
    runner.detect()
    assert (tmp_path / "results" / "trials.jsonl").read_bytes() == trials
