# src/metrics.py
"""
metrics.py: Classification metrics for VoxSentinel speaker identification.

This module provides reusable functions to turn true/predicted speaker
labels into the figures reported for every model: confusion matrix,
accuracy, support-weighted precision / recall / F1, a per-class table and
the top-k (highest support) sub-matrix used for the confusion heatmap.
It is imported by `evaluator.py` and `bias_analysis.py`, and can be used in
offline analysis scripts.

Functions included:
- confusion_matrix: counts[true, predicted]
- metrics_from_confusion: accuracy + weighted precision / recall / F1
- per_class_metrics: per-speaker precision / recall / F1 / support (DataFrame)
- topk_confusion: the k×k sub-matrix of the k highest-support classes

Robustness & Safety
-------------------
- All functions are pure and side-effect free.
- A class that is never predicted has precision 0 (column sum 0); a class
  without support has recall 0 and does not contribute to weighted averages.
- Labels outside [0, K) raise IndexError naming the offending position.
- Metrics of an all-zero matrix are undefined and raise ValueError.

Typical usage:
    from metrics import confusion_matrix, metrics_from_confusion
    cm = confusion_matrix(y_true, y_pred, num_classes, class_labels)
    report = metrics_from_confusion(cm)
"""

from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd

AVERAGING = "weighted"


@dataclass(eq=False)
class ConfusionMatrix:
    """K×K counts, rows = true class, columns = predicted class."""

    counts: np.ndarray
    class_labels: list[str]

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def support(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def to_frame(self) -> pd.DataFrame:
        labels = [str(s) for s in self.class_labels]
        df = pd.DataFrame(self.counts, index=labels, columns=labels)
        df.index.name = "true\\predicted"
        return df


@dataclass
class MetricsReport:
    test_accuracy: float
    precision: float
    recall: float
    f1: float
    test_loss: float | None = None
    averaging: str = AVERAGING

    def to_dict(self) -> dict:
        return asdict(self)


def _as_labels(values, k: int, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.int64).reshape(-1)
    bad = np.flatnonzero((arr < 0) | (arr >= k))
    if bad.size:
        pos = int(bad[0])
        raise IndexError(f"{name} label {int(arr[pos])} at position {pos} is outside [0, {k}).")
    return arr


def confusion_matrix(y_true, y_pred, num_classes: int, class_labels: list[str] | None = None) -> ConfusionMatrix:
    """Count (true, predicted) pairs into a num_classes × num_classes matrix."""
    t = _as_labels(y_true, num_classes, "true")
    p = _as_labels(y_pred, num_classes, "predicted")
    if t.size != p.size:
        raise ValueError(f"true and predicted labels differ in length ({t.size} vs {p.size}).")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    labels = list(class_labels) if class_labels is not None else [str(i) for i in range(num_classes)]
    return ConfusionMatrix(counts, labels)


def _per_class(counts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    counts = counts.astype(np.float64)
    tp = np.diag(counts)
    col = counts.sum(axis=0)
    row = counts.sum(axis=1)
    precision = np.divide(tp, col, out=np.zeros_like(tp), where=col > 0)
    recall = np.divide(tp, row, out=np.zeros_like(tp), where=row > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)
    return precision, recall, f1, row


def metrics_from_confusion(cm: ConfusionMatrix) -> MetricsReport:
    """Accuracy plus support-weighted precision, recall and F1."""
    total = cm.total
    if total == 0:
        raise ValueError("Metrics are undefined for an all-zero confusion matrix.")
    precision, recall, f1, support = _per_class(cm.counts)
    weights = support / total
    return MetricsReport(
        test_accuracy=float(np.trace(cm.counts) / total),
        precision=float(np.dot(weights, precision)),
        recall=float(np.dot(weights, recall)),
        f1=float(np.dot(weights, f1)),
    )


def per_class_metrics(cm: ConfusionMatrix) -> pd.DataFrame:
    precision, recall, f1, support = _per_class(cm.counts)
    return pd.DataFrame(
        {
            "label": [str(s) for s in cm.class_labels],
            "precision": precision,
            "recall": recall,
            "f1": f1,
            "support": support.astype(np.int64),
        }
    )


def topk_confusion(cm: ConfusionMatrix, k: int) -> ConfusionMatrix:
    """Sub-matrix of the k highest-support classes; ties keep label order."""
    if not 1 <= k <= cm.num_classes:
        raise ValueError(f"k must be in [1, {cm.num_classes}], got {k}.")
    order = np.argsort(-cm.support, kind="stable")[:k]
    return ConfusionMatrix(cm.counts[np.ix_(order, order)], [cm.class_labels[i] for i in order])


def argmax_predictions(probabilities: np.ndarray) -> np.ndarray:
    """Row-wise argmax; ties go to the lowest class index."""
    return np.argmax(np.asarray(probabilities), axis=1).astype(np.int64)
