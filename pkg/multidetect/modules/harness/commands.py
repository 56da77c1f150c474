"""
CLI subcommands of the experiment harness.

Commands:
- train-models : Train the attacked model and the K representation models
- attack       : Generate FGSM / BIM / CW sets and transfer statistics
- detect       : Run the detector trial grid into results/trials.jsonl
- report       : Summary CSV, SVG panels, endpoint tables, image grid
- all          : Every stage in order (completed stages are skipped)
- describe     : Print the resolved configuration and the model size
"""
import argparse
import json
from pathlib import Path
from typing import Any, Dict, Optional

from multidetect.core.config import load_experiment_config, settings
from multidetect.core.errors import ConfigError, EXIT_OK
from multidetect.modules.harness.schemas import ExperimentConfig
from multidetect.modules.harness.service import STAGES, ExperimentRunner
from multidetect.modules.models import build_classifier


# ========== OPTIONS ==========

def parse_dataset(value: Optional[str]) -> Optional[Dict[str, Any]]:
    """``synthetic`` or ``cifar10:<dir>`` -> dataset config override."""
    if value is None:
        return None
    if value == "synthetic":
        return {"source": "synthetic"}
    kind, _, path = value.partition(":")
    if kind == "cifar10" and path:
        return {"source": "cifar10", "path": path}
    raise ConfigError(f"--dataset must be 'synthetic' or 'cifar10:<dir>', got {value!r}")


def add_common_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="JSON experiment config")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="master seed (non-negative)")
    parser.add_argument("--dataset", default=None, help="synthetic | cifar10:<dir>")
    parser.add_argument("--jobs", type=int, default=None, help="worker processes")


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    dataset = args.dataset
    if dataset is None and args.config is None:
        dataset = settings.DATASET
    return load_experiment_config(
        args.config,
        {
            "output_dir": args.out,
            "master_seed": args.seed,
            "dataset": parse_dataset(dataset),
        },
    )


def resolve_jobs(args: argparse.Namespace) -> int:
    jobs = settings.JOBS if args.jobs is None else args.jobs
    if jobs < 1:
        raise ConfigError(f"--jobs must be >= 1, got {jobs}")
    return jobs


# ========== HANDLERS ==========

def _run_stages(*names: str):
    def handler(args: argparse.Namespace) -> int:
        runner = ExperimentRunner(resolve_config(args), resolve_jobs(args))
        runner.run(names)
        return EXIT_OK

    return handler


def describe(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    classifier = build_classifier(cfg.arch, 0)
    print(json.dumps(cfg.model_dump(mode="json"), indent=2, sort_keys=True))
    print(f"parameters per model: {classifier.graph.parameter_count()}")
    print(f"models: 1 attacked + {cfg.population_size} representation")
    return EXIT_OK


def register(subparsers) -> None:
    """Mount the harness subcommands on an argparse subparsers object."""
    commands = {
        "train-models": ("Train the attacked and representation models", _run_stages("train-models")),
        "attack": ("Generate the adversarial sets", _run_stages("attack")),
        "detect": ("Run the detection trial grid", _run_stages("detect")),
        "report": ("Emit CSV / SVG / Markdown reports", _run_stages("report")),
        "all": ("Run every stage", _run_stages(*STAGES)),
        "describe": ("Print the resolved configuration", describe),
    }
    for name, (help_text, handler) in commands.items():
        parser = subparsers.add_parser(name, help=help_text)
        add_common_options(parser)
        parser.set_defaults(handler=handler)
