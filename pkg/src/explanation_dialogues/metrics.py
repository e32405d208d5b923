"""Confusion matrices, macro-F1, RMSE and MAE."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass
class ConfusionMatrix:
    """Counts with rows = gold label, columns = predicted label."""

    labels: tuple[str, ...]
    counts: np.ndarray

    @classmethod
    def empty(cls, labels: Sequence[str]) -> "ConfusionMatrix":
        return cls(tuple(labels), np.zeros((len(labels), len(labels)), dtype=np.int64))

    @classmethod
    def from_pairs(cls, labels: Sequence[str], gold: Sequence[str], pred: Sequence[str]) -> "ConfusionMatrix":
        cm = cls.empty(labels)
        cm.add(gold, pred)
        return cm

    def add(self, gold: Sequence[str], pred: Sequence[str]) -> None:
        if len(gold) != len(pred):
            raise ValueError(f"length mismatch: {len(gold)} gold vs {len(pred)} predicted")
        idx = {lab: i for i, lab in enumerate(self.labels)}
        for g, p in zip(gold, pred):
            self.counts[idx[g], idx[p]] += 1

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.labels != self.labels:
            raise ValueError("confusion matrices over different label sets")
        return ConfusionMatrix(self.labels, self.counts + other.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class F1Report:
    per_label_f1: dict[str, float]
    macro: float


def macro_f1(cm: ConfusionMatrix) -> F1Report:
    """Unweighted mean of per-label F1 over the full label set.

    Zero denominators give precision/recall/F1 of 0, so labels that never
    occur still count in the mean.
    """
    counts = np.asarray(cm.counts)
    if counts.size == 0 or counts.sum() == 0:
        raise ValueError("empty confusion matrix")
    if (counts < 0).any():
        raise ValueError("negative counts in confusion matrix")
    per_label = {}
    for i, lab in enumerate(cm.labels):
        tp = int(counts[i, i])
        fp = int(counts[:, i].sum()) - tp
        fn = int(counts[i, :].sum()) - tp
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        per_label[lab] = 2 * p * r / (p + r) if p + r else 0.0
    return F1Report(per_label, sum(per_label.values()) / len(per_label))


@dataclass(frozen=True)
class RegressionErrors:
    rmse: float
    mae: float


def rmse_mae(pred: Sequence[float], gold: Sequence[float]) -> RegressionErrors:
    p = np.asarray(pred, dtype=float)
    g = np.asarray(gold, dtype=float)
    if p.shape != g.shape:
        raise ValueError(f"length mismatch: {p.size} predictions vs {g.size} gold values")
    if p.size == 0:
        raise ValueError("no predictions to evaluate")
    err = p - g
    return RegressionErrors(math.sqrt(float(np.mean(err * err))), float(np.mean(np.abs(err))))
