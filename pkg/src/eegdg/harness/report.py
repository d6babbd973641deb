"""Per-subject aggregation and table rendering."""
from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from ..algorithms import ALGORITHM_NAMES
from ..models import MODEL_NAMES
from .train import ExperimentResult

SUBJECTS = tuple(range(1, 16))
FINETUNE_LABEL = "ERM (Fine-tuning)"
MISSING = "-"

# Published per-subject accuracies, used as formatting fixtures.
TABLE_I_FIXTURE = {
    "DeepConvNet": [80.00, 91.11, 59.78, 84.22, 43.78, 40.44, 39.78, 53.11, 38.00, 49.56, 43.33, 65.56, 61.11,
                    60.00, 69.33],
    "EEGNet": [76.89, 72.00, 63.78, 84.89, 44.22, 38.89, 41.78, 56.67, 38.89, 50.22, 45.56, 63.56, 64.00, 55.33,
               66.00],
    "ResNet1D-8": [75.56, 82.44, 69.78, 90.00, 44.00, 36.67, 37.11, 54.67, 39.56, 51.56, 44.44, 67.11, 61.11,
                   64.67, 68.00],
    "ResNet1D-18": [73.33, 97.33, 76.44, 93.33, 46.00, 37.78, 40.89, 56.89, 38.00, 56.22, 41.78, 68.89, 64.00,
                    70.44, 77.33],
}
TABLE_I_AVG = {"DeepConvNet": 58.61, "EEGNet": 57.51, "ResNet1D-8": 59.11, "ResNet1D-18": 62.58}

TABLE_II_FIXTURE = {
    "ERM": TABLE_I_FIXTURE["ResNet1D-18"],
    "DANN": [73.56, 93.56, 73.78, 90.44, 49.11, 38.44, 40.44, 56.89, 40.00, 54.00, 44.00, 64.67, 64.00, 69.33,
             73.11],
    "GroupDRO": [75.78, 91.11, 71.56, 88.22, 43.11, 38.67, 36.89, 56.67, 36.44, 50.44, 46.89, 66.00, 57.56, 70.00,
                 72.89],
    "Mixup": [78.67, 92.89, 69.56, 91.11, 45.78, 33.78, 38.22, 59.78, 38.00, 47.56, 45.78, 65.33, 57.78, 70.00,
              78.00],
    FINETUNE_LABEL: [49.33, 54.00, 55.33, 95.33, 38.67, 42.00, 42.67, 44.67, 38.00, 49.33, 46.00, 68.00, 64.67,
                     62.67, 79.33],
}
TABLE_II_AVG = {"ERM": 62.58, "DANN": 61.69, "GroupDRO": 60.15, "Mixup": 60.82, FINETUNE_LABEL: 55.33}


@dataclass
class ReportRow:
    label: str
    cells: dict[int, float | None]

    @property
    def avg(self) -> float | None:
        vals = [v for v in self.cells.values() if v is not None]
        return float(np.mean(vals)) if vals else None

    @property
    def complete(self) -> bool:
        return all(v is not None for v in self.cells.values())


@dataclass
class ReportTable:
    title: str
    row_header: str
    subjects: tuple[int, ...]
    rows: list[ReportRow] = field(default_factory=list)


def subject_scores(results: list[ExperimentResult]) -> dict[int, float | None]:
    """Per target subject: the hp trial with the best mean validation accuracy
    (earliest trial on ties), reported as the mean test accuracy of its seeds.

    A subject with any failed run is incomplete and maps to None.
    """
    by_subject: dict[int, list[ExperimentResult]] = defaultdict(list)
    for r in results:
        by_subject[r.config["target_subject"]].append(r)
    out: dict[int, float | None] = {}
    for s, runs in sorted(by_subject.items()):
        if any(r.status != "ok" for r in runs):
            out[s] = None
            continue
        trials: dict[int, list[ExperimentResult]] = defaultdict(list)
        for r in runs:
            trials[r.config["hp_trial"]].append(r)
        best = max(sorted(trials), key=lambda t: (np.mean([r.best_val_acc for r in trials[t]]), -t))
        out[s] = float(np.mean([r.test_acc for r in trials[best]]))
    return out


def _row_key(r: ExperimentResult, kind: str) -> str | None:
    c = r.config
    if not {"model", "algorithm", "pipeline", "target_subject", "hp_trial"} <= set(c):
        return None
    if kind == "models":
        return c["model"] if c["pipeline"] == "loso" and c["algorithm"] == "ERM" else None
    if c["pipeline"] == "finetune":
        return FINETUNE_LABEL
    return c["algorithm"] if c["pipeline"] == "loso" else None


def best_model(results: list[ExperimentResult]) -> str | None:
    """Model whose ERM row has the highest average."""
    table = aggregate_report(results, "models")
    scored = [(row.avg, row.label) for row in table.rows if row.avg is not None]
    return max(scored)[1] if scored else None


def aggregate_report(results: list[ExperimentResult], kind: str = "models", model: str | None = None,
                     subjects: tuple[int, ...] | None = None) -> ReportTable:
    """Rows per model (ERM runs, ``kind="models"``) or per algorithm on one model
    (``kind="algorithms"``, fine-tuning included)."""
    if kind not in ("models", "algorithms"):
        raise ValueError(f"kind must be 'models' or 'algorithms', got {kind!r}")
    if kind == "algorithms":
        model = model or best_model(results)
        results = [r for r in results if r.config.get("model") == model]
    groups: dict[str, list[ExperimentResult]] = defaultdict(list)
    for r in results:
        key = _row_key(r, kind)
        if key is not None:
            groups[key].append(r)
    if subjects is None:
        subjects = tuple(sorted({r.config["target_subject"] for rs in groups.values() for r in rs}))
    order = list(MODEL_NAMES) if kind == "models" else list(ALGORITHM_NAMES) + [FINETUNE_LABEL]
    rows = []
    for label in order:
        if label in groups:
            scores = subject_scores(groups[label])
            rows.append(ReportRow(label, {s: scores.get(s) for s in subjects}))
    if kind == "models":
        return ReportTable("Classification Accuracy (%) of Deep Learning Models", "Model", subjects, rows)
    return ReportTable(f"Classification Accuracy (%) of ERM and DG Algorithms ({model})", "Algorithm", subjects, rows)


def fixture_table(kind: str = "models") -> ReportTable:
    data = TABLE_I_FIXTURE if kind == "models" else TABLE_II_FIXTURE
    title = ("Classification Accuracy (%) of Deep Learning Models" if kind == "models"
             else "Classification Accuracy (%) of ERM and DG Algorithms (ResNet1D-18)")
    rows = [ReportRow(label, dict(zip(SUBJECTS, cells))) for label, cells in data.items()]
    return ReportTable(title, "Model" if kind == "models" else "Algorithm", SUBJECTS, rows)


def _fmt(v: float | None, missing: str = MISSING) -> str:
    return missing if v is None else f"{v:.2f}"


def _grid(table: ReportTable, missing: str) -> list[list[str]]:
    head = [table.row_header] + [str(s) for s in table.subjects] + ["Avg."]
    body = [[row.label] + [_fmt(row.cells.get(s), missing) for s in table.subjects] + [_fmt(row.avg, missing)]
            for row in table.rows]
    return [head] + body


def render_csv(table: ReportTable) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(_grid(table, ""))
    return buf.getvalue()


def render_markdown(table: ReportTable) -> str:
    grid = _grid(table, MISSING)
    widths = [max(len(r[i]) for r in grid) for i in range(len(grid[0]))]

    def line(cells):
        parts = [cells[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(cells[1:], widths[1:])]
        return "| " + " | ".join(parts) + " |"

    sep = "|" + "|".join([":" + "-" * (widths[0] + 1)] + ["-" * (w + 1) + ":" for w in widths[1:]]) + "|"
    return "\n".join([f"**{table.title}**", "", line(grid[0]), sep] + [line(r) for r in grid[1:]]) + "\n"


def render(table: ReportTable, fmt: str = "md") -> str:
    if fmt == "csv":
        return render_csv(table)
    if fmt == "md":
        return render_markdown(table)
    raise ValueError(f"unknown report format {fmt!r}")
