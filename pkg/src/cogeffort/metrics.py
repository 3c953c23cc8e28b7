"""Binary classification metrics with explicit zero-denominator handling."""

from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class ClassificationReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    counts: ConfusionCounts
    zero_division_flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "precision": self.precision,
                "recall": self.recall, "f1": self.f1,
                "zero_division_flags": list(self.zero_division_flags)}


def _check_labels(y_true, y_pred):
    yt = np.asarray(y_true)
    yp = np.asarray(y_pred)
    if yt.ndim != 1 or yt.shape != yp.shape:
        raise DataError("y_true and y_pred must be equal-length 1-D vectors")
    if yt.size == 0:
        raise DataError("cannot compute metrics on empty input")
    for name, arr in (("y_true", yt), ("y_pred", yp)):
        if set(np.unique(arr)) - {0, 1}:
            raise DataError(f"{name} must contain only 0/1 labels")
    return yt.astype(np.int64), yp.astype(np.int64)


def confusion_counts(y_true, y_pred) -> ConfusionCounts:
    yt, yp = _check_labels(y_true, y_pred)
    return ConfusionCounts(tp=int(((yt == 1) & (yp == 1)).sum()),
                           fp=int(((yt == 0) & (yp == 1)).sum()),
                           tn=int(((yt == 0) & (yp == 0)).sum()),
                           fn=int(((yt == 1) & (yp == 0)).sum()))


def classification_metrics(y_true, y_pred) -> ClassificationReport:
    """Accuracy, precision, recall, F1 with class 1 as positive.

    Zero denominators yield 0.0 and set a flag naming the metric.
    """
    c = confusion_counts(y_true, y_pred)
    flags = []

    def ratio(num, den, name):
        if den == 0:
            flags.append(name)
            return 0.0
        return num / den

    precision = ratio(c.tp, c.tp + c.fp, "precision")
    recall = ratio(c.tp, c.tp + c.fn, "recall")
    f1 = ratio(2.0 * precision * recall, precision + recall, "f1")
    accuracy = (c.tp + c.tn) / c.total
    return ClassificationReport(accuracy=accuracy, precision=precision,
                                recall=recall, f1=f1, counts=c,
                                zero_division_flags=tuple(flags))
