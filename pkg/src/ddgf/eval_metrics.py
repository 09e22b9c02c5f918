"""Multiclass accuracy metrics from a confusion matrix, plus the k-sweep harness.

Per-class TP/TN/FP/FN use the one-vs-rest reduction: class c is positive,
the other eight classes together are negative.  The five reported metrics
are then

    accuracy    = (TP + TN) / (TP + TN + FP + FN)
    precision   = TP / (TP + FP)
    recall      = TP / (TP + FN)
    specificity = TN / (FP + TN)
    F1          = 2 * TP / (2 * TP + FP + FN)

with any zero denominator yielding 0 and a degenerate flag, so exported CSV
stays numeric.  Reported values round to 4 decimal places.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "N_CLASSES",
    "ConfusionMatrix",
    "ClassMetrics",
    "SweepRow",
    "per_class_metrics",
    "total_accuracy",
    "k_sweep",
    "metrics_csv_rows",
    "sweep_csv_rows",
]

N_CLASSES = 9


@dataclass
class ConfusionMatrix:
    """Integer tally; rows are true classes 1..9, columns predicted classes."""

    counts: np.ndarray

    @classmethod
    def zero(cls, n_classes: int = N_CLASSES) -> "ConfusionMatrix":
        return cls(np.zeros((n_classes, n_classes), dtype=np.int64))

    @classmethod
    def from_pairs(
        cls, true: Sequence[int], predicted: Sequence[int], n_classes: int = N_CLASSES
    ) -> "ConfusionMatrix":
        if len(true) != len(predicted):
            raise ValueError(
                f"length mismatch: {len(true)} true vs {len(predicted)} predicted"
            )
        cm = cls.zero(n_classes)
        for t, p in zip(true, predicted):
            if not (1 <= t <= n_classes and 1 <= p <= n_classes):
                raise ValueError(f"label outside 1..{n_classes}: true={t} pred={p}")
            cm.counts[t - 1, p - 1] += 1
        return cm

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    def total(self) -> int:
        return int(self.counts.sum())

    def trace(self) -> int:
        return int(np.trace(self.counts))


@dataclass(frozen=True)
class ClassMetrics:
    """One-vs-rest tallies and the five derived metrics for one class."""

    cls: int
    tp: int
    tn: int
    fp: int
    fn: int
    accuracy: float
    precision: float
    recall: float
    specificity: float
    f1: float
    degenerate: tuple[str, ...] = ()


def _ratio(num: int, den: int, name: str, degenerate: list[str]) -> float:
    if den == 0:
        degenerate.append(name)
        return 0.0
    return num / den


def per_class_metrics(cm: ConfusionMatrix) -> list[ClassMetrics]:
    """Metrics for every class, including empty ones (degenerate-flagged)."""
    total = cm.total()
    out = []
    for c in range(cm.n_classes):
        tp = int(cm.counts[c, c])
        fn = int(cm.counts[c].sum()) - tp
        fp = int(cm.counts[:, c].sum()) - tp
        tn = total - tp - fp - fn
        degenerate: list[str] = []
        out.append(
            ClassMetrics(
                cls=c + 1,
                tp=tp,
                tn=tn,
                fp=fp,
                fn=fn,
                accuracy=_ratio(tp + tn, total, "accuracy", degenerate),
                precision=_ratio(tp, tp + fp, "precision", degenerate),
                recall=_ratio(tp, tp + fn, "recall", degenerate),
                specificity=_ratio(tn, fp + tn, "specificity", degenerate),
                f1=_ratio(2 * tp, 2 * tp + fp + fn, "f1", degenerate),
                degenerate=tuple(degenerate),
            )
        )
    return out


def total_accuracy(cm: ConfusionMatrix) -> float:
    """True predictions over all predictions: trace / cell sum."""
    total = cm.total()
    if total == 0:
        raise ValueError("empty confusion matrix")
    return cm.trace() / total


@dataclass
class SweepRow:
    """Evaluation of one k over the shared split."""

    k: int
    accuracy: float
    per_class: list[ClassMetrics]
    cm: ConfusionMatrix


def k_sweep(enc, ks: Sequence[int], spec) -> list[SweepRow]:
    """Evaluate kNN for each k over one shared train/test split.

    The split and the neighbor ranking are computed once; only the vote is
    redone per k, so sweeping 2..19 costs one distance matrix.
    """
    from .hamming_knn import KnnModel, rank_neighbors, split, vote_majority

    if not ks:
        raise ValueError("ks must be non-empty")
    train_idx, test_idx = split(enc, spec)
    model = KnnModel.fit(enc, train_idx, k=max(ks))
    test_rows = enc.packed[test_idx]
    test_labels = [enc.labels[i] for i in test_idx]
    order, dists = rank_neighbors(model, test_rows)

    rows = []
    for k in ks:
        if k > len(train_idx):
            raise ValueError(f"k={k} exceeds training size {len(train_idx)}")
        preds = []
        for q in range(len(test_idx)):
            nearest = order[q, :k]
            preds.append(
                vote_majority(
                    model.train_labels[nearest].tolist(), dists[q, nearest].tolist()
                )
            )
        cm = ConfusionMatrix.from_pairs(test_labels, preds)
        rows.append(
            SweepRow(k=k, accuracy=total_accuracy(cm), per_class=per_class_metrics(cm), cm=cm)
        )
    return rows


def metrics_csv_rows(cm: ConfusionMatrix) -> list[str]:
    """Per-class table in the published layout, plus a total row."""
    lines = ["class,accuracy,precision,recall,specificity,f1"]
    for m in per_class_metrics(cm):
        lines.append(
            f"{m.cls},{m.accuracy:.4f},{m.precision:.4f},{m.recall:.4f},"
            f"{m.specificity:.4f},{m.f1:.4f}"
        )
    lines.append(f"total,{total_accuracy(cm):.4f},,,,")
    return lines


def sweep_csv_rows(rows: list[SweepRow]) -> list[str]:
    lines = ["k,class,accuracy,precision,recall,specificity,f1"]
    for row in rows:
        lines.append(f"{row.k},total,{row.accuracy:.4f},,,,")
        for m in row.per_class:
            lines.append(
                f"{row.k},{m.cls},{m.accuracy:.4f},{m.precision:.4f},{m.recall:.4f},"
                f"{m.specificity:.4f},{m.f1:.4f}"
            )
    return lines
