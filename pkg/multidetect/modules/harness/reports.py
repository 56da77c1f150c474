"""
Report emission: summary CSV, one SVG per (pipeline, train attack, test
attack) with mean +- std bands over N, endpoint tables and the attacked-image
grid. Every file is a pure function of the summary, so identical runs give
identical bytes.
"""
import csv
import io
from collections import defaultdict
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from multidetect.core.logging import get_logger
from multidetect.core.seeding import derive_seed
from multidetect.core.storage import write_atomic
from multidetect.modules.attacks.grid import save_grid
from multidetect.modules.attacks.schemas import AttackKind
from multidetect.modules.attacks.service import AdversarialSet
from multidetect.modules.detection.schemas import Arm, PipelineKind
from multidetect.modules.harness.schemas import SummaryCell

logger = get_logger(__name__)

CSV_COLUMNS = ("pipeline", "arm", "train_attack", "test_attack", "N", "mean", "std", "trials")
ARM_STYLE = {
    Arm.CONTROL: {"color": "#1f77b4", "label": "control"},
    Arm.TREATMENT: {"color": "#d62728", "label": "treatment"},
}

plt.rcParams["svg.hashsalt"] = "multidetect"
plt.rcParams["svg.fonttype"] = "none"


def _write_text(path: Path, text: str) -> Path:
    write_atomic(path, text.encode("utf-8"))
    return path


# ========== CSV ==========

def summary_csv(summary: Sequence[SummaryCell]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for cell in summary:
        writer.writerow([
            cell.pipeline.value,
            cell.arm.value,
            cell.train_attack.value,
            cell.test_attack.value,
            cell.n,
            f"{cell.mean:.6f}",
            f"{cell.std:.6f}",
            cell.trials,
        ])
    return buffer.getvalue()


# ========== FIGURES ==========

PanelKey = Tuple[PipelineKind, AttackKind, AttackKind]


def group_panels(summary: Sequence[SummaryCell]) -> Dict[PanelKey, Dict[Arm, List[SummaryCell]]]:
    panels: Dict[PanelKey, Dict[Arm, List[SummaryCell]]] = defaultdict(lambda: defaultdict(list))
    for cell in summary:
        panels[(cell.pipeline, cell.train_attack, cell.test_attack)][cell.arm].append(cell)
    for arms in panels.values():
        for cells in arms.values():
            cells.sort(key=lambda c: c.n)
    return panels


def panel_svg(key: PanelKey, arms: Mapping[Arm, List[SummaryCell]]) -> str:
    pipeline, train_attack, test_attack = key
    fig, ax = plt.subplots(figsize=(4.0, 3.0))
    for arm in (Arm.CONTROL, Arm.TREATMENT):
        cells = arms.get(arm)
        if not cells:
            continue
        n = [c.n for c in cells]
        mean = [c.mean for c in cells]
        lower = [c.mean - c.std for c in cells]
        upper = [c.mean + c.std for c in cells]
        style = ARM_STYLE[arm]
        ax.fill_between(n, lower, upper, color=style["color"], alpha=0.2, linewidth=0)
        ax.plot(n, mean, marker="o", markersize=3, color=style["color"], label=style["label"])
    ax.set_xscale("log", base=2)
    ax.set_xlabel("N")
    ax.set_ylabel("detection accuracy")
    ax.set_title(f"{pipeline.value}: train {train_attack.value.upper()}, test {test_attack.value.upper()}", fontsize=9)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    buffer = io.StringIO()
    fig.savefig(buffer, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buffer.getvalue()


def panel_filename(key: PanelKey) -> str:
    pipeline, train_attack, test_attack = key
    return f"{pipeline.value}_{train_attack.value}_{test_attack.value}.svg"


# ========== ENDPOINT TABLES ==========

def endpoints_markdown(summary: Sequence[SummaryCell]) -> str:
    """Mean +- std at the smallest and largest N of every panel and arm."""
    lines = ["# Detection accuracy at the N endpoints", ""]
    panels = group_panels(summary)
    for pipeline in PipelineKind:
        keys = [k for k in panels if k[0] == pipeline]
        if not keys:
            continue
        lines += [
            f"## {pipeline.value}",
            "",
            "| train | test | arm | N | mean +- std | N | mean +- std |",
            "|---|---|---|---|---|---|---|",
        ]
        for key in keys:
            for arm in (Arm.CONTROL, Arm.TREATMENT):
                cells = panels[key].get(arm)
                if not cells:
                    continue
                first, last = cells[0], cells[-1]
                lines.append(
                    f"| {key[1].value.upper()} | {key[2].value.upper()} | {arm.value} "
                    f"| {first.n} | {first.mean:.3f} +- {first.std:.3f} "
                    f"| {last.n} | {last.mean:.3f} +- {last.std:.3f} |"
                )
        lines.append("")
    return "\n".join(lines)


# ========== ENTRY ==========

def emit_reports(
    summary: Sequence[SummaryCell],
    out_dir: Path,
    attack_sets: Optional[Mapping[AttackKind, AdversarialSet]] = None,
    seed: int = 0,
    class_names: Optional[Sequence[str]] = None,
) -> List[Path]:
    """Write every report file under ``out_dir``; returns the paths written."""
    if not summary:
        raise ValueError("Nothing to report: empty summary")
    out_dir = Path(out_dir)
    written = [_write_text(out_dir / "summary.csv", summary_csv(summary))]

    for key, arms in sorted(group_panels(summary).items(), key=lambda item: panel_filename(item[0])):
        written.append(_write_text(out_dir / panel_filename(key), panel_svg(key, arms)))

    written.append(_write_text(out_dir / "endpoints.md", endpoints_markdown(summary)))

    if attack_sets:
        grid_path = out_dir / "attacked_images.png"
        save_grid(grid_path, attack_sets, derive_seed(seed, "grid"), class_names=class_names)
        written.append(grid_path)

    logger.info("Wrote %d report file(s) to %s", len(written), out_dir)
    return written
