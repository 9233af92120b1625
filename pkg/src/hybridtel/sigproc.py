"""Moving-average smoothing and Pearson correlation of the V/I/P/T channels."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import EmptySeries, LengthMismatch, SeriesTooShort, WindowTooLarge, ZeroVariance
from .telemetry import TelemetryRecord, channel

# Sample counts used for the ~1 min static and ~10 min dynamic tests.
STATIC_WINDOW = 17
DYNAMIC_WINDOW = 50

CHANNELS = ("V", "I", "P", "T")
_CHANNEL_ATTR = {"V": "voltage", "I": "current", "P": "power", "T": "temperature"}


@dataclass(frozen=True)
class SmoothedSeries:
    window: int
    start_index: int
    values: np.ndarray


def sma(series: Sequence[float], window: int) -> SmoothedSeries:
    """Trailing simple moving average without edge padding.

    ``values[k]`` is the mean of ``series[k : k + window]`` and is aligned
    with raw index ``k + window - 1``.
    """
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        raise EmptySeries("cannot smooth an empty series")
    if window < 1 or window > x.size:
        raise WindowTooLarge(f"window {window} outside [1, {x.size}]")
    values = sliding_window_view(x, window).mean(axis=1)
    return SmoothedSeries(window=window, start_index=window - 1, values=values)


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    a = np.asarray(x, dtype=float)
    b = np.asarray(y, dtype=float)
    if a.shape != b.shape:
        raise LengthMismatch(f"lengths differ: {a.size} vs {b.size}")
    if a.size < 2:
        raise SeriesTooShort("pearson needs at least 2 points")
    da = a - a.mean()
    db = b - b.mean()
    sa = float(np.dot(da, da))
    sb = float(np.dot(db, db))
    if sa == 0.0 or sb == 0.0:
        raise ZeroVariance("constant channel")
    r = float(np.dot(da, db)) / math.sqrt(sa * sb)
    return min(1.0, max(-1.0, r))


@dataclass(frozen=True)
class CorrelationMatrix:
    """Pearson coefficients between channels; NaN where a channel is constant."""

    labels: tuple[str, ...]
    r: np.ndarray
    zero_variance: tuple[str, ...] = ()

    def get(self, a: str, b: str) -> float:
        return float(self.r[self.labels.index(a), self.labels.index(b)])

    def pairs(self) -> dict[str, float]:
        """The four pairs reported per scenario, in table order."""
        return {f"{a}-{b}": self.get(a, b) for a, b in (("V", "I"), ("V", "P"), ("I", "P"), ("V", "T"))}


def correlation_matrix(records: Sequence[TelemetryRecord]) -> CorrelationMatrix:
    if len(records) < 2:
        raise SeriesTooShort("need at least 2 records")
    data = {c: channel(records, _CHANNEL_ATTR[c]) for c in CHANNELS}
    flat = tuple(c for c in CHANNELS if np.all(data[c] == data[c][0]))
    k = len(CHANNELS)
    r = np.full((k, k), np.nan)
    for i, a in enumerate(CHANNELS):
        for j in range(i, k):
            b = CHANNELS[j]
            if a in flat or b in flat:
                continue
            r[i, j] = r[j, i] = 1.0 if i == j else pearson(data[a], data[b])
    return CorrelationMatrix(CHANNELS, r, flat)


def _fmt_r(value: float) -> str:
    return "ZeroVariance" if math.isnan(value) else f"{value:.3f}"


def correlation_table_csv(rows: Sequence[tuple[str, CorrelationMatrix]]) -> str:
    """Scenario rows with V-I, V-P, I-P, V-T columns (three decimals)."""
    out = ["Scenario,V-I,V-P,I-P,V-T"]
    for name, cm in rows:
        out.append(",".join([name] + [_fmt_r(v) for v in cm.pairs().values()]))
    return "\n".join(out) + "\n"


def correlation_matrix_csv(cm: CorrelationMatrix) -> str:
    out = ["," + ",".join(cm.labels)]
    for i, a in enumerate(cm.labels):
        out.append(",".join([a] + [_fmt_r(v) for v in cm.r[i]]))
    return "\n".join(out) + "\n"


def smoothed_csv(t_ms: Sequence[int], raw: Sequence[float], smoothed: SmoothedSeries) -> str:
    out = ["t_ms,raw,sma"]
    for k, value in enumerate(smoothed.values):
        idx = k + smoothed.start_index
        out.append(f"{int(t_ms[idx])},{float(raw[idx])!r},{float(value)!r}")
    return "\n".join(out) + "\n"
