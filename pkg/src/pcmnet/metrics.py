"""Binary classification metrics derived exactly from the confusion matrix."""

from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch


@dataclass
class Metrics:
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    confusion: np.ndarray   # [2, 2], rows = true label, cols = prediction

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "confusion": self.confusion.tolist(),
        }


def _safe_div(num: float, den: float) -> float:
    return num / den if den else 0.0


def compute_metrics(preds, labels) -> Metrics:
    """Accuracy plus macro P/R/F1 over the two classes; 0/0 divisions give 0."""
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.shape != labels.shape:
        raise LengthMismatch(
            f"preds shape {preds.shape} != labels shape {labels.shape}")
    if preds.size == 0:
        raise LengthMismatch("need at least one prediction")
    if not (np.isin(preds, (0, 1)).all() and np.isin(labels, (0, 1)).all()):
        raise ValueError("preds and labels must be binary")

    confusion = np.zeros((2, 2), dtype=np.int64)
    for t, p in zip(labels.astype(int), preds.astype(int)):
        confusion[t, p] += 1

    precisions, recalls, f1s = [], [], []
    for c in (0, 1):
        tp = confusion[c, c]
        fp = confusion[1 - c, c]
        fn = confusion[c, 1 - c]
        precision = _safe_div(tp, tp + fp)
        recall = _safe_div(tp, tp + fn)
        f1 = _safe_div(2 * precision * recall, precision + recall)
        precisions.append(precision)
        recalls.append(recall)
        f1s.append(f1)

    return Metrics(
        accuracy=float(np.trace(confusion) / confusion.sum()),
        macro_precision=float(np.mean(precisions)),
        macro_recall=float(np.mean(recalls)),
        macro_f1=float(np.mean(f1s)),
        confusion=confusion,
    )
