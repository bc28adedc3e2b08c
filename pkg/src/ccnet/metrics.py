"""Confusion-matrix metrics with *congested* as the positive class."""

from dataclasses import asdict, dataclass
from typing import Iterable

import numpy as np

from .errors import UndefinedMetricError

NON_CONGESTED = 0
CONGESTED = 1
LABEL_NAMES = {NON_CONGESTED: "non_congested", CONGESTED: "congested"}
LABEL_IDS = {name: idx for idx, name in LABEL_NAMES.items()}


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        for name in ("tp", "tn", "fp", "fn"):
            value = getattr(self, name)
            if value < 0:
                raise ValueError(f"{name} must be non-negative, got {value}")
            object.__setattr__(self, name, int(value))

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def as_dict(self) -> dict:
        return asdict(self)


def confusion_matrix(labels: Iterable[int], predictions: Iterable[int]) -> ConfusionMatrix:
    """Count (label, prediction) pairs.

    FP is a non-congested sample predicted congested; FN is a congested
    sample predicted non-congested.
    """
    y = np.asarray(list(labels), dtype=int)
    p = np.asarray(list(predictions), dtype=int)
    if y.shape != p.shape:
        raise ValueError(f"{y.size} labels but {p.size} predictions")
    for arr, what in ((y, "label"), (p, "prediction")):
        if arr.size and not np.isin(arr, (NON_CONGESTED, CONGESTED)).all():
            raise ValueError(f"{what} values must be 0 (non_congested) or 1 (congested)")
    pos, neg = y == CONGESTED, y == NON_CONGESTED
    return ConfusionMatrix(
        tp=int(np.sum(pos & (p == CONGESTED))),
        tn=int(np.sum(neg & (p == NON_CONGESTED))),
        fp=int(np.sum(neg & (p == CONGESTED))),
        fn=int(np.sum(pos & (p == NON_CONGESTED))),
    )


def precision(cm: ConfusionMatrix) -> float:
    if cm.tp + cm.fp == 0:
        raise UndefinedMetricError("precision is undefined: no samples were predicted congested")
    return cm.tp / (cm.tp + cm.fp)


def recall(cm: ConfusionMatrix) -> float:
    if cm.tp + cm.fn == 0:
        raise UndefinedMetricError("recall is undefined: no congested samples present")
    return cm.tp / (cm.tp + cm.fn)


def accuracy(cm: ConfusionMatrix, variant: str = "standard") -> float:
    """``standard`` is (tp+tn)/total; ``as_printed`` is tp/total."""
    if cm.total == 0:
        raise UndefinedMetricError("accuracy is undefined on an empty confusion matrix")
    if variant == "standard":
        return (cm.tp + cm.tn) / cm.total
    if variant == "as_printed":
        return cm.tp / cm.total
    raise ValueError(f"unknown accuracy variant {variant!r}")


def _maybe(fn, *args):
    try:
        return fn(*args)
    except UndefinedMetricError:
        return None


def metrics_report(cm: ConfusionMatrix) -> dict:
    """Report dict; undefined ratios appear as ``None`` (JSON ``null``)."""
    return {
        "precision": _maybe(precision, cm),
        "recall": _maybe(recall, cm),
        "accuracy": _maybe(accuracy, cm, "standard"),
        "accuracy_as_printed": _maybe(accuracy, cm, "as_printed"),
        **cm.as_dict(),
    }
