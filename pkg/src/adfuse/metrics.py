"""Multi-label evaluation: per-class average precision, mAP, F1-C, F1-O.

Conventions (they matter on small datasets and are stated in every report):
    * AP ranks samples by descending score, ties broken by ascending sample
      index, and averages precision over the ranks of the positives.
    * Classes with zero positives are non-evaluable: excluded from mAP and
      from the F1-C mean (their per-class entries are NaN / 0 respectively).
    * F1-O is micro F1 over pooled TP/FP/FN of all classes.
    * Per-class F1 uses the zero convention: F1 = 0 when P + R = 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, UsageError
from .numerics import Array


def average_precision(scores: Array, labels: Array) -> float:
    """AP of one class: mean of precision@rank over the positive ranks.

    Raises UsageError when the class has no positive label (non-evaluable);
    `mean_average_precision` handles the exclusion.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ShapeError(f"scores {scores.shape} and labels {labels.shape} must be equal-length vectors")
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise UsageError("average_precision undefined for a class with no positives")
    # stable sort on negated scores: descending score, ties by ascending index
    order = np.argsort(-scores, kind="stable")
    ranked = labels[order]
    cum_pos = np.cumsum(ranked)
    ranks = np.arange(1, len(ranked) + 1)
    precision_at = cum_pos / ranks
    return float(precision_at[ranked > 0].sum() / n_pos)


@dataclass
class MapResult:
    map: float
    per_class_ap: Array  # NaN for non-evaluable classes
    evaluable: Array     # bool per class


def mean_average_precision(scores: Array, labels: Array) -> MapResult:
    """Mean AP over classes with at least one positive. scores/labels: (samples, classes)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 2:
        raise ShapeError(f"score matrix {scores.shape} and label matrix {labels.shape} must match, 2-D")
    n_classes = scores.shape[1]
    per_class = np.full(n_classes, math.nan)
    evaluable = labels.sum(axis=0) > 0
    if not evaluable.any():
        raise UsageError("mAP undefined: no class has a positive label")
    for c in range(n_classes):
        if evaluable[c]:
            per_class[c] = average_precision(scores[:, c], labels[:, c])
    return MapResult(map=float(per_class[evaluable].mean()), per_class_ap=per_class, evaluable=evaluable)


def f1_scores(predictions: Array, labels: Array) -> tuple[float, float, Array]:
    """(F1-C, F1-O, per-class F1) from binary matrices of shape (samples, classes).

    F1-C averages per-class F1 over evaluable classes (>= 1 positive);
    F1-O is micro F1 over the pooled confusion counts of all classes.
    """
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape or predictions.ndim != 2:
        raise ShapeError(f"prediction matrix {predictions.shape} and label matrix {labels.shape} must match, 2-D")
    pred = predictions > 0
    lab = labels > 0
    tp = (pred & lab).sum(axis=0).astype(np.float64)
    fp = (pred & ~lab).sum(axis=0).astype(np.float64)
    fn = (~pred & lab).sum(axis=0).astype(np.float64)

    per_class = np.zeros(predictions.shape[1])
    denom = 2 * tp + fp + fn
    nonzero = denom > 0
    per_class[nonzero] = 2 * tp[nonzero] / denom[nonzero]

    evaluable = lab.sum(axis=0) > 0
    f1_c = float(per_class[evaluable].mean()) if evaluable.any() else 0.0

    tp_all, fp_all, fn_all = tp.sum(), fp.sum(), fn.sum()
    micro_denom = 2 * tp_all + fp_all + fn_all
    f1_o = float(2 * tp_all / micro_denom) if micro_denom > 0 else 0.0
    return f1_c, f1_o, per_class


def label_prior_scores(train_labels: Array, n_samples: int) -> Array:
    """Baseline score matrix: every sample gets the training class frequencies."""
    train_labels = np.asarray(train_labels, dtype=np.float64)
    freq = train_labels.mean(axis=0)
    return np.tile(freq, (n_samples, 1))


@dataclass
class MetricsReport:
    """Evaluation summary for one task."""

    task: str
    map: float
    f1_c: float
    f1_o: float
    per_class_ap: list[float | None]
    per_class_f1: list[float]
    support: list[int]
    n_samples: int
    threshold: float
    note: str = "classes with zero positives are excluded from mAP and the F1-C mean"

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "map": self.map,
            "f1_c": self.f1_c,
            "f1_o": self.f1_o,
            "per_class_ap": self.per_class_ap,
            "per_class_f1": self.per_class_f1,
            "support": self.support,
            "n_samples": self.n_samples,
            "threshold": self.threshold,
            "note": self.note,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_text(self) -> str:
        lines = [
            f"task: {self.task}   samples: {self.n_samples}   threshold: {self.threshold}",
            f"mAP: {self.map:.4f}   F1-C: {self.f1_c:.4f}   F1-O: {self.f1_o:.4f}",
            f"({self.note})",
            "",
            f"{'class':>6} {'support':>8} {'AP':>8} {'F1':>8}",
        ]
        for c, (ap, f1, sup) in enumerate(zip(self.per_class_ap, self.per_class_f1, self.support)):
            ap_text = f"{ap:8.4f}" if ap is not None else "       -"
            lines.append(f"{c:>6} {sup:>8} {ap_text} {f1:8.4f}")
        return "\n".join(lines) + "\n"


def evaluate_predictions(task: str, scores: Array, labels: Array, threshold: float = 0.5) -> MetricsReport:
    """Full report from a score matrix: ranking metrics plus thresholded F1."""
    res = mean_average_precision(scores, labels)
    preds = scores > threshold
    f1_c, f1_o, per_class_f1 = f1_scores(preds, np.asarray(labels))
    support = np.asarray(labels).sum(axis=0).astype(int)
    per_class_ap = [None if math.isnan(v) else float(v) for v in res.per_class_ap]
    return MetricsReport(
        task=task,
        map=res.map,
        f1_c=f1_c,
        f1_o=f1_o,
        per_class_ap=per_class_ap,
        per_class_f1=[float(v) for v in per_class_f1],
        support=[int(s) for s in support],
        n_samples=int(np.asarray(labels).shape[0]),
        threshold=threshold,
    )
