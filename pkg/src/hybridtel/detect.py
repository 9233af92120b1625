"""Robust outlier scoring and exact penalized change-point segmentation."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateWarning, EmptySeries, SeriesTooLong, SeriesTooShort

MAD_SCALE = 0.6745
DEFAULT_THRESHOLD = 3.0
MIN_SEGMENT = 2
ORACLE_MAX_N = 2000


def _as_series(series: Sequence[float]) -> np.ndarray:
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise EmptySeries("series must be a non-empty 1-D sequence")
    return x


def median_mad(series: Sequence[float]) -> tuple[float, float]:
    x = _as_series(series)
    med = float(np.median(x))
    return med, float(np.median(np.abs(x - med)))


def modified_zscore(series: Sequence[float]) -> np.ndarray:
    """``0.6745 * (x - median) / MAD``; all zeros (with a warning) when MAD is 0."""
    x = _as_series(series)
    med, mad = median_mad(x)
    if mad == 0.0:
        warnings.warn("MAD is zero; modified Z-scores are degenerate", DegenerateWarning, stacklevel=2)
        return np.zeros_like(x)
    return MAD_SCALE * (x - med) / mad


@dataclass(frozen=True)
class AnomalyReport:
    indices: list[int]
    scores: list[float]
    threshold: float
    spike_threshold_v: float
    median: float
    mad: float
    degenerate: bool = False


def detect_anomalies(series: Sequence[float], threshold: float = DEFAULT_THRESHOLD) -> AnomalyReport:
    x = _as_series(series)
    med, mad = median_mad(x)
    if mad == 0.0:
        return AnomalyReport([], [], threshold, 0.0, med, 0.0, degenerate=True)
    scores = MAD_SCALE * (x - med) / mad
    idx = np.flatnonzero(np.abs(scores) > threshold)
    return AnomalyReport(
        indices=[int(i) for i in idx],
        scores=[float(scores[i]) for i in idx],
        threshold=threshold,
        spike_threshold_v=threshold * mad / MAD_SCALE,
        median=med,
        mad=mad,
    )


# -- change points -----------------------------------------------------------

def prefix_sums(series: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative sums of x and x**2 with a leading zero.

    The series is centred on its median first; L2 segment costs are
    shift-invariant and centring limits cancellation error.
    """
    x = np.asarray(series, dtype=float)
    x = x - np.median(x)
    s1 = np.concatenate(([0.0], np.cumsum(x)))
    s2 = np.concatenate(([0.0], np.cumsum(x * x)))
    return s1, s2


def segment_cost_l2(prefix: tuple[np.ndarray, np.ndarray], i: int, j: int) -> float:
    """Sum of squared deviations from the mean over ``x[i:j]``, in O(1)."""
    if j <= i:
        raise ValueError("empty segment")
    return float(_costs_to(prefix, np.array([i]), j)[0])


def _costs_to(prefix: tuple[np.ndarray, np.ndarray], starts: np.ndarray, j: int) -> np.ndarray:
    s1, s2 = prefix
    a = s1[j] - s1[starts]
    cost = (s2[j] - s2[starts]) - a * a / (j - starts)
    return np.maximum(cost, 0.0)


@dataclass(frozen=True)
class ChangePointReport:
    change_points: list[int]
    penalty: float
    total_cost: float
    segment_means: list[float] = field(default_factory=list)
    n: int = 0

    @property
    def segments(self) -> list[tuple[int, int]]:
        return list(zip([0, *self.change_points], [*self.change_points, self.n]))


def _report(x: np.ndarray, cps: list[int], penalty: float, total: float) -> ChangePointReport:
    bounds = [0, *cps, len(x)]
    means = [float(x[a:b].mean()) for a, b in zip(bounds[:-1], bounds[1:])]
    return ChangePointReport(cps, penalty, float(total), means, len(x))


def _backtrack(last: np.ndarray, n: int) -> list[int]:
    cps = []
    t = int(last[n])
    while t > 0:
        cps.append(t)
        t = int(last[t])
    return sorted(cps)


def _check_inputs(series: Sequence[float], penalty: float, min_size: int) -> np.ndarray:
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or x.size < max(2, min_size):
        raise SeriesTooShort("change-point detection needs at least 2 samples")
    if not penalty >= 0:
        raise ValueError("penalty must be >= 0")
    return x


def pelt(series: Sequence[float], penalty: float, min_size: int = MIN_SEGMENT) -> ChangePointReport:
    """Exact minimiser of total L2 cost + ``penalty`` per change point.

    Candidates are pruned once they can no longer start the final segment
    of an optimal partition (pruning constant 0). With a minimum segment
    length, the pruning test for a candidate ``s`` at time ``t`` uses the
    split point ``t - min_size`` so the remaining segment stays feasible.
    Ties go to the earliest last change point.
    """
    x = _check_inputs(series, penalty, min_size)
    n = len(x)
    pre = prefix_sums(x)
    F = np.full(n + 1, np.inf)
    last = np.zeros(n + 1, dtype=np.int64)
    F[0] = -penalty
    candidates = np.array([0], dtype=np.int64)
    for t in range(min_size, n + 1):
        split = t - min_size
        if split >= min_size:
            candidates = np.append(candidates, split)
            # prune with a relative slack so rounding never discards an optimum
            old = candidates[split - candidates >= min_size]
            keep = F[old] + _costs_to(pre, old, split) <= F[split] + 1e-12 * (abs(F[split]) + 1.0)
            candidates = np.concatenate((old[keep], candidates[split - candidates < min_size]))
        values = F[candidates] + _costs_to(pre, candidates, t) + penalty
        k = int(np.argmin(values))
        F[t] = values[k]
        last[t] = candidates[k]
    return _report(x, _backtrack(last, n), penalty, F[n])


def optimal_partition_oracle(series: Sequence[float], penalty: float, min_size: int = MIN_SEGMENT) -> ChangePointReport:
    """Unpruned O(n^2) dynamic program over every admissible last change point."""
    x = _check_inputs(series, penalty, min_size)
    n = len(x)
    if n > ORACLE_MAX_N:
        raise SeriesTooLong(f"oracle limited to {ORACLE_MAX_N} samples")
    pre = prefix_sums(x)
    F = np.full(n + 1, np.inf)
    last = np.zeros(n + 1, dtype=np.int64)
    F[0] = -penalty
    for t in range(min_size, n + 1):
        starts = np.concatenate(([0], np.arange(min_size, t - min_size + 1))).astype(np.int64)
        values = F[starts] + _costs_to(pre, starts, t) + penalty
        k = int(np.argmin(values))
        F[t] = values[k]
        last[t] = starts[k]
    return _report(x, _backtrack(last, n), penalty, F[n])


def robust_noise_scale(series: Sequence[float]) -> float:
    """Noise sigma from the MAD of first differences (insensitive to level shifts)."""
    d = np.diff(np.asarray(series, dtype=float))
    _, mad = median_mad(d)
    return mad / (MAD_SCALE * math.sqrt(2.0))


def default_penalty(series: Sequence[float]) -> float:
    """BIC-style penalty ``2 * sigma**2 * ln(n)`` with a robust sigma estimate."""
    x = np.asarray(series, dtype=float)
    if x.size < 3:
        raise SeriesTooShort("default_penalty needs at least 3 samples")
    sigma = robust_noise_scale(x)
    if sigma == 0.0:
        warnings.warn("noise scale is zero; penalty is 0", DegenerateWarning, stacklevel=2)
        return 0.0
    return 2.0 * sigma * sigma * math.log(x.size)
