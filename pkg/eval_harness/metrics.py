from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from sklearn.metrics import confusion_matrix, precision_recall_fscore_support

from core.exceptions import InputError


@dataclass(frozen=True)
class Metrics:
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f1: float

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def degenerate(self) -> bool:
        """Every prediction was the same class."""
        return self.total > 0 and (self.tp + self.fp == 0 or self.tn + self.fn == 0)

    def to_dict(self) -> dict:
        return asdict(self)


def compute_metrics(predictions, labels) -> Metrics:
    predictions = np.asarray(predictions, dtype=np.int64).ravel()
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if predictions.shape != labels.shape:
        raise InputError(f"compute_metrics: {len(predictions)} predictions for {len(labels)} labels")
    for name, values in (("predictions", predictions), ("labels", labels)):
        if values.size and not np.isin(values, (0, 1)).all():
            raise InputError(f"compute_metrics: {name} must be 0 or 1, got {sorted(set(values.tolist()) - {0, 1})}")
    if not labels.size:
        return Metrics(0, 0, 0, 0, 0.0, 0.0, 0.0)

    tn, fp, fn, tp = confusion_matrix(labels, predictions, labels=[0, 1]).ravel()
    precision, recall, f1, _ = precision_recall_fscore_support(
        labels, predictions, average="binary", pos_label=1, zero_division=0
    )
    return Metrics(int(tp), int(fp), int(fn), int(tn), float(precision), float(recall), float(f1))
