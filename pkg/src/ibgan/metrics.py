"""Macro-averaged classification metrics and replicate aggregation."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

__all__ = [
    "confusion_matrix",
    "balanced_accuracy",
    "macro_f1",
    "per_class_precision_recall",
    "pr_auc",
    "macro_pr_auc",
    "MetricsReport",
    "report",
    "aggregate",
]

METRIC_NAMES = ("balanced_accuracy", "macro_f1", "pr_auc")


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    """Counts with rows = true class, columns = predicted class."""
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true), np.asarray(y_pred)), 1)
    return cm


def _check(cm) -> np.ndarray:
    cm = np.asarray(cm)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise ValueError(f"confusion matrix must be square, got {cm.shape}")
    if np.any(cm < 0):
        raise ValueError("confusion matrix has negative counts")
    empty = np.flatnonzero(cm.sum(axis=1) == 0)
    if empty.size:
        raise ValueError(f"true classes {empty.tolist()} have no samples")
    return cm


def per_class_precision_recall(cm) -> tuple[np.ndarray, np.ndarray]:
    """Precision and recall per class; precision of a never-predicted class is 0."""
    cm = _check(cm).astype(np.float64)
    tp = np.diag(cm)
    predicted = cm.sum(axis=0)
    precision = np.divide(tp, predicted, out=np.zeros_like(tp), where=predicted > 0)
    recall = tp / cm.sum(axis=1)
    return precision, recall


def balanced_accuracy(cm) -> float:
    """Mean per-class recall (macro recall)."""
    _, recall = per_class_precision_recall(cm)
    return float(recall.mean())


def macro_f1(cm) -> float:
    """Mean per-class F1; a class with P + R = 0 contributes 0."""
    p, r = per_class_precision_recall(cm)
    denom = p + r
    f1 = np.divide(2 * p * r, denom, out=np.zeros_like(p), where=denom > 0)
    return float(f1.mean())


def pr_auc(scores, labels, positive_class=1) -> float:
    """Average precision: ``sum_n (R_n - R_{n-1}) P_n`` over distinct score thresholds.

    Scores are swept in descending order; tied scores enter together as one
    threshold.
    """
    scores = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(labels) == positive_class
    if pos.all() or not pos.any():
        raise ValueError("pr_auc needs at least one positive and one negative label")
    order = np.argsort(-scores, kind="mergesort")
    s, pos = scores[order], pos[order]
    # last index of each group of tied scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(pos)[ends]
    seen = ends + 1
    precision = tp / seen
    recall = tp / pos.sum()
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def macro_pr_auc(probs, labels) -> float:
    """One-vs-rest average precision, averaged over classes present in ``labels``.

    For two classes this is the value for class 1 alone.
    """
    probs = np.asarray(probs)
    labels = np.asarray(labels)
    if probs.shape[1] == 2:
        return pr_auc(probs[:, 1], labels, 1)
    present = [c for c in range(probs.shape[1]) if np.any(labels == c)]
    return float(np.mean([pr_auc(probs[:, c], labels, c) for c in present]))


@dataclass
class MetricsReport:
    balanced_accuracy: float
    macro_f1: float
    pr_auc: float
    precision: list[float] = field(default_factory=list)
    recall: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def report(probs, labels) -> MetricsReport:
    """Score class-probability rows against integer labels with the argmax rule."""
    probs = np.asarray(probs)
    labels = np.asarray(labels)
    cm = confusion_matrix(labels, probs.argmax(axis=1), probs.shape[1])
    p, r = per_class_precision_recall(cm)
    return MetricsReport(
        balanced_accuracy=balanced_accuracy(cm),
        macro_f1=macro_f1(cm),
        pr_auc=macro_pr_auc(probs, labels),
        precision=p.tolist(),
        recall=r.tolist(),
    )


def aggregate(reports) -> dict[str, tuple[float, float | None]]:
    """Mean and sample standard deviation (ddof=1) per metric.

    With a single report the deviation is ``None``.
    """
    out = {}
    for name in METRIC_NAMES:
        vals = np.array([getattr(r, name) if not isinstance(r, dict) else r[name] for r in reports])
        sd = float(vals.std(ddof=1)) if vals.size >= 2 else None
        out[name] = (float(vals.mean()), sd)
    return out
