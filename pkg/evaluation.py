"""Confusion matrices, one-vs-rest metrics with macro averaging, and sweep tables."""

from __future__ import annotations

import csv
import io
import logging
from pathlib import Path
from typing import Sequence

import numpy as np

from errors import ValidationError
from models import ConfusionMatrix, MetricsReport, SweepCell, SweepSummary
from utils import fmt_float, fmt_str

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ("model", "setting", "metric", "mean", "std", "n")
METRIC_NAMES = ("accuracy", "precision", "recall", "f1")


def confusion(pred: Sequence[int] | np.ndarray, true: Sequence[int] | np.ndarray, num_classes: int) -> ConfusionMatrix:
    """counts[i][j] is the number of windows of true class i predicted as j."""
    pred = np.asarray(pred, dtype=np.int64).reshape(-1)
    true = np.asarray(true, dtype=np.int64).reshape(-1)
    if pred.size != true.size:
        raise ValidationError(f"{pred.size} predictions for {true.size} labels")
    if num_classes < 1:
        raise ValidationError(f"num_classes must be >= 1, got {num_classes}")
    for label, arr in (("predicted", pred), ("true", true)):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            raise ValidationError(f"{label} label out of range [0, {num_classes}): {int(arr.min())}..{int(arr.max())}")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (true, pred), 1)
    return ConfusionMatrix(counts=counts)


def _ratio(num: float, den: float, cell: str, undefined: list[str]) -> float:
    if den == 0:
        undefined.append(cell)
        return 0.0
    return num / den


def compute_metrics(cm: ConfusionMatrix) -> MetricsReport:
    """Accuracy plus per-class and macro precision, recall and F1.

    A 0/0 cell is reported as 0 and named in ``undefined``.
    """
    counts = np.asarray(cm.counts, dtype=np.int64)
    if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
        raise ValidationError(f"confusion matrix must be square, got shape {counts.shape}")
    if np.any(counts < 0):
        raise ValidationError("confusion matrix has negative counts")
    total = int(counts.sum())
    if total < 1:
        raise ValidationError("confusion matrix is empty")

    undefined: list[str] = []
    precision: list[float] = []
    recall: list[float] = []
    f1: list[float] = []
    for c in range(counts.shape[0]):
        tp = int(counts[c, c])
        fp = int(counts[:, c].sum()) - tp
        fn = int(counts[c, :].sum()) - tp
        p = _ratio(tp, tp + fp, f"precision[{c}]", undefined)
        r = _ratio(tp, tp + fn, f"recall[{c}]", undefined)
        precision.append(p)
        recall.append(r)
        f1.append(_ratio(2.0 * p * r, p + r, f"f1[{c}]", undefined))
    if undefined:
        logger.warning(f"metric cells with a zero denominator reported as 0: {', '.join(undefined)}")

    return MetricsReport(
        accuracy=int(np.trace(counts)) / total,
        precision=tuple(precision),
        recall=tuple(recall),
        f1=tuple(f1),
        macro_precision=float(np.mean(precision)),
        macro_recall=float(np.mean(recall)),
        macro_f1=float(np.mean(f1)),
        support=tuple(int(s) for s in counts.sum(axis=1)),
        undefined=undefined,
    )


def format_report(report: MetricsReport, class_names: Sequence[str] = ()) -> str:
    names = list(class_names) or [str(c) for c in range(len(report.precision))]
    lines = [f"accuracy {report.accuracy:.4f}", f"{fmt_str('class', 8)} precision  recall     f1         support"]
    for i, name in enumerate(names):
        lines.append(
            f"{fmt_str(name, 8)} {report.precision[i]:<10.4f} {report.recall[i]:<10.4f} "
            f"{report.f1[i]:<10.4f} {report.support[i] if report.support else ''}"
        )
    lines.append(
        f"{fmt_str('macro', 8)} {report.macro_precision:<10.4f} {report.macro_recall:<10.4f} "
        f"{report.macro_f1:<10.4f} {sum(report.support)}"
    )
    if report.undefined:
        lines.append(f"undefined (reported as 0): {', '.join(report.undefined)}")
    return "\n".join(lines)


def write_confusion_csv(cm: ConfusionMatrix, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["true\\pred", *range(cm.num_classes)])
        for i, row in enumerate(cm.counts):
            writer.writerow([i, *(int(v) for v in row)])
    return path


def write_metrics_csv(report: MetricsReport, path: str | Path) -> Path:
    """Long-form ``name,value`` rows: headline values first, then per class."""
    rows: list[tuple[str, str]] = [
        ("accuracy", fmt_float(report.accuracy)),
        ("macro_precision", fmt_float(report.macro_precision)),
        ("macro_recall", fmt_float(report.macro_recall)),
        ("macro_f1", fmt_float(report.macro_f1)),
    ]
    for c in range(len(report.precision)):
        rows.append((f"precision_{c}", fmt_float(report.precision[c])))
        rows.append((f"recall_{c}", fmt_float(report.recall[c])))
        rows.append((f"f1_{c}", fmt_float(report.f1[c])))
        if report.support:
            rows.append((f"support_{c}", str(report.support[c])))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["name", "value"])
        writer.writerows(rows)
    return path


# ---------- sweep tables ----------


def summarize(cell: SweepCell) -> SweepSummary:
    values = np.asarray(cell.values, dtype=np.float64)
    if values.size == 0:
        raise ValidationError(f"sweep cell {cell.model}/{cell.setting} has no repeats")
    std = float(np.std(values, ddof=1)) if values.size >= 2 else None
    return SweepSummary(cell.model, cell.setting, cell.metric, float(np.mean(values)), std, int(values.size))


def sweep_report(results: Sequence[SweepCell]) -> list[SweepSummary]:
    """Mean and sample standard deviation per cell, in input order."""
    return [summarize(cell) for cell in results]


def format_cell(summary: SweepSummary) -> str:
    """``mean±std``; a single repeat shows the mean alone."""
    if summary.std is None:
        return f"{summary.mean:.3f}"
    return f"{summary.mean:.3f}±{summary.std:.3f}"


def sweep_csv(rows: Sequence[SweepSummary]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for r in rows:
        writer.writerow(
            [r.model, r.setting, r.metric, fmt_float(r.mean), "n/a" if r.std is None else fmt_float(r.std), r.n]
        )
    return buf.getvalue()


def sweep_table(rows: Sequence[SweepSummary]) -> str:
    """Aligned text: one row per model, one column per setting."""
    models = list(dict.fromkeys(r.model for r in rows))
    settings = list(dict.fromkeys(r.setting for r in rows))
    cells = {(r.model, r.setting): format_cell(r) for r in rows}
    width = max([len(s) for s in settings] + [len(c) for c in cells.values()] + [11])
    first = max([len(m) for m in models] + [5])
    header = fmt_str("model", first) + "  " + "  ".join(fmt_str(s, width) for s in settings)
    lines = [header.rstrip()]
    for m in models:
        line = fmt_str(m, first) + "  " + "  ".join(fmt_str(cells.get((m, s), "-"), width) for s in settings)
        lines.append(line.rstrip())
    return "\n".join(lines)
