"""Forecast and classification metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptySeries, InputError, LengthMismatch

THROTTLE_NAMES = ("25%", "50%", "75%", "100%")


def _pair(y_true: Sequence[float], y_pred: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(y_true, dtype=float).ravel()
    b = np.asarray(y_pred, dtype=float).ravel()
    if a.size != b.size:
        raise LengthMismatch(f"lengths differ: {a.size} vs {b.size}")
    if a.size == 0:
        raise EmptySeries("no values to compare")
    return a, b


def mae(y_true: Sequence[float], y_pred: Sequence[float]) -> float:
    a, b = _pair(y_true, y_pred)
    return float(np.mean(np.abs(a - b)))


def rmse(y_true: Sequence[float], y_pred: Sequence[float]) -> float:
    a, b = _pair(y_true, y_pred)
    return math.sqrt(float(np.mean((a - b) ** 2)))


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes."""

    classes: tuple[int, ...]
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class ClassificationReport:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    accuracy: float
    confusion: ConfusionMatrix
    # (class, metric) cells that were 0/0 and reported as 0
    zero_denominator: tuple[tuple[int, str], ...] = ()


def confusion_matrix(y_true: Sequence[int], y_pred: Sequence[int], k: int = 4) -> ConfusionMatrix:
    t = np.asarray(y_true, dtype=np.int64).ravel()
    p = np.asarray(y_pred, dtype=np.int64).ravel()
    if t.size != p.size:
        raise LengthMismatch(f"lengths differ: {t.size} vs {p.size}")
    if t.size and (t.min() < 0 or p.min() < 0 or t.max() >= k or p.max() >= k):
        raise InputError(f"labels must lie in [0, {k})")
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    return ConfusionMatrix(tuple(range(k)), counts)


def classification_report(y_true: Sequence[int], y_pred: Sequence[int], k: int = 4) -> ClassificationReport:
    cm = confusion_matrix(y_true, y_pred, k)
    c = cm.counts
    tp = np.diag(c).astype(float)
    pred_tot = c.sum(axis=0).astype(float)
    true_tot = c.sum(axis=1).astype(float)
    flags: list[tuple[int, str]] = []

    def ratio(num: np.ndarray, den: np.ndarray, name: str) -> np.ndarray:
        out = np.zeros(k)
        for i in range(k):
            if den[i] == 0:
                flags.append((i, name))
            else:
                out[i] = num[i] / den[i]
        return out

    precision = ratio(tp, pred_tot, "precision")
    recall = ratio(tp, true_tot, "recall")
    f1 = ratio(2 * precision * recall, precision + recall, "f1")
    accuracy = float(tp.sum() / cm.total) if cm.total else 0.0
    return ClassificationReport(precision, recall, f1, accuracy, cm, tuple(flags))


def classification_table_csv(reports: Sequence[tuple[str, ClassificationReport]], names: Sequence[str] = THROTTLE_NAMES) -> str:
    """Classifier x metric rows, one column per class."""
    out = ["Classifier,Metric," + ",".join(names)]
    for model, rep in reports:
        for label, values in (("Precision", rep.precision), ("Recall", rep.recall), ("F1-score", rep.f1)):
            out.append(",".join([model, label] + [f"{v:.2f}" for v in values]))
    return "\n".join(out) + "\n"


def forecast_table_csv(rows: Sequence[tuple[str, float, float]]) -> str:
    out = ["Scenario,MAE,RMSE"]
    out += [f"{name},{m:.4f},{r:.4f}" for name, m, r in rows]
    return "\n".join(out) + "\n"
