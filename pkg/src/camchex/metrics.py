"""Ranking metrics: per-class average precision, AUROC, and grouped reports.

Average precision uses the step-interpolation definition (sum of precision at
each positive's rank, weighted by the recall increment), with ties broken by
stable original order. AUROC uses the rank formulation with mid-rank tie
handling, equivalent to pair counting where ties score one half.

Classes whose masked labels cannot support a metric (no positives for AP, a
single class for AUROC) are skipped and reported rather than zero-filled,
since zero-filling would silently deflate the macro averages.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data.types import ClassGroup, LabelVector, PrevalenceTable


class UndefinedMetricError(ValueError):
    """Raised when a metric is undefined for the given labels (skip signal)."""


def average_precision(scores: np.ndarray, labels: np.ndarray) -> float:
    """Area under the precision-recall step curve.

    ``labels`` is boolean; raises :class:`UndefinedMetricError` when there is
    no positive label.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D arrays of equal length")
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise UndefinedMetricError("no positive labels")

    order = np.argsort(-scores, kind="stable")
    hits = labels[order]
    ranks = np.arange(1, len(scores) + 1)
    precision_at = np.cumsum(hits) / ranks
    return float(precision_at[hits].sum() / n_pos)


def _midranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned their average rank."""
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores), dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j < len(scores) and sorted_scores[j] == sorted_scores[i]:
            j += 1
        ranks[order[i:j]] = 0.5 * (i + 1 + j)
        i = j
    return ranks


def auroc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Probability a positive outranks a negative, ties counting one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D arrays of equal length")
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("needs at least one positive and one negative")

    ranks = _midranks(scores)
    pos_rank_sum = float(ranks[labels].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


@dataclass(frozen=True)
class ClassMetrics:
    label: str
    ap: float | None
    auroc: float | None
    group: ClassGroup


@dataclass(frozen=True)
class MetricsReport:
    per_class: tuple[ClassMetrics, ...]
    mAP: float
    macro_auroc: float | None
    group_map: dict[str, float | None]
    skipped_classes: tuple[tuple[str, str], ...]

    def to_dict(self) -> dict:
        return {
            "per_class": [
                {
                    "label": m.label,
                    "ap": m.ap,
                    "auroc": m.auroc,
                    "group": m.group.value,
                }
                for m in self.per_class
            ],
            "mAP": self.mAP,
            "macro_auroc": self.macro_auroc,
            "group_map": dict(self.group_map),
            "skipped_classes": [
                {"label": name, "reason": reason} for name, reason in self.skipped_classes
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    def render_table(self) -> str:
        width = max((len(m.label) for m in self.per_class), default=10) + 2
        lines = [f"{'Pathology':<{width}}{'Group':<8}{'AP':>8}{'AUROC':>8}"]
        for m in self.per_class:
            ap = f"{m.ap:.4f}" if m.ap is not None else "--"
            au = f"{m.auroc:.4f}" if m.auroc is not None else "--"
            lines.append(f"{m.label:<{width}}{m.group.value:<8}{ap:>8}{au:>8}")
        lines.append("-" * (width + 24))
        macro = f"{self.macro_auroc:.4f}" if self.macro_auroc is not None else "--"
        lines.append(f"{'mAP':<{width}}{'':<8}{self.mAP:.4f}{'':>8}")
        lines.append(f"{'macro AUROC':<{width}}{'':<8}{'':>8}{macro:>8}")
        for group in ("head", "body", "tail"):
            value = self.group_map.get(group)
            text = f"{value:.4f}" if value is not None else "--"
            lines.append(f"{'mAP ' + group:<{width}}{'':<8}{text:>8}")
        if self.skipped_classes:
            lines.append("skipped: " + ", ".join(f"{n} ({r})" for n, r in self.skipped_classes))
        return "\n".join(lines)


def evaluate(
    predictions: np.ndarray,
    labels: Sequence[LabelVector],
    prevalence: PrevalenceTable,
) -> MetricsReport:
    """Per-class AP/AUROC over masked entries, with frequency-group means.

    Grouping comes from ``prevalence`` (conventionally computed on the
    training split) rather than from the evaluated data itself.
    """
    predictions = np.asarray(predictions, dtype=np.float64)
    if predictions.ndim != 2 or predictions.shape[0] != len(labels):
        raise ValueError("predictions must be (num_studies, num_classes)")
    q = prevalence.num_classes
    if predictions.shape[1] != q:
        raise ValueError(f"predictions have {predictions.shape[1]} classes, expected {q}")

    values = np.stack([lv.values for lv in labels]).astype(np.float64)
    mask = np.stack([lv.mask for lv in labels])

    per_class: list[ClassMetrics] = []
    skipped: list[tuple[str, str]] = []
    for c in range(q):
        sel = mask[:, c]
        scores_c = predictions[sel, c]
        labels_c = values[sel, c] > 0.5
        try:
            ap = average_precision(scores_c, labels_c)
        except UndefinedMetricError as exc:
            ap = None
            skipped.append((prevalence.label_names[c], f"AP: {exc}"))
        try:
            au = auroc(scores_c, labels_c)
        except UndefinedMetricError as exc:
            au = None
            skipped.append((prevalence.label_names[c], f"AUROC: {exc}"))
        per_class.append(
            ClassMetrics(
                label=prevalence.label_names[c],
                ap=ap,
                auroc=au,
                group=prevalence.groups[c],
            )
        )

    aps = [m.ap for m in per_class if m.ap is not None]
    if not aps:
        raise UndefinedMetricError("every class was skipped; nothing to report")
    aurocs = [m.auroc for m in per_class if m.auroc is not None]

    group_map: dict[str, float | None] = {}
    for group in ClassGroup:
        members = [m.ap for m in per_class if m.group is group and m.ap is not None]
        group_map[group.value] = float(np.mean(members)) if members else None

    return MetricsReport(
        per_class=tuple(per_class),
        mAP=float(np.mean(aps)),
        macro_auroc=float(np.mean(aurocs)) if aurocs else None,
        group_map=group_map,
        skipped_classes=tuple(skipped),
    )


def write_predictions_csv(
    path: str | Path,
    study_ids: Sequence[str],
    predictions: np.ndarray,
    label_names: Sequence[str],
) -> None:
    predictions = np.asarray(predictions)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["study_id", *label_names])
        for sid, row in zip(study_ids, predictions):
            writer.writerow([sid, *(f"{v:.6f}" for v in row)])


def read_predictions_csv(path: str | Path) -> tuple[list[str], np.ndarray, list[str]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        label_names = header[1:]
        ids, rows = [], []
        for row in reader:
            ids.append(row[0])
            rows.append([float(v) for v in row[1:]])
    return ids, np.asarray(rows, dtype=np.float64), label_names
