from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridtel import sigproc
from hybridtel.errors import EmptySeries, LengthMismatch, WindowTooLarge, ZeroVariance
from hybridtel.synth import generate_scenario, preset
from hybridtel.telemetry import TelemetryRecord


def brute_pearson(x, y) -> float:
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    num = sum((a - mx) * (b - my) for a, b in zip(x, y))
    den = math.sqrt(sum((a - mx) ** 2 for a in x) * sum((b - my) ** 2 for b in y))
    return num / den


def test_sma_constant_is_fixed_point():
    assert sigproc.sma([5, 5, 5, 5], 3).values.tolist() == [5, 5]


def test_sma_small_example():
    out = sigproc.sma([1, 2, 3, 4], 2)
    assert out.values.tolist() == [1.5, 2.5, 3.5]
    assert out.start_index == 1


def test_sma_full_window_is_mean():
    x = np.arange(10.0) ** 2
    assert sigproc.sma(x, 10).values == pytest.approx([x.mean()])


def test_sma_errors():
    with pytest.raises(EmptySeries):
        sigproc.sma([], 1)
    with pytest.raises(WindowTooLarge):
        sigproc.sma([1, 2], 3)
    with pytest.raises(WindowTooLarge):
        sigproc.sma([1, 2], 0)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=60),
    st.floats(-10, 10),
    st.floats(-10, 10),
    st.integers(1, 60),
)
def test_sma_is_linear(xs, a, b, window):
    x = np.array(xs)
    window = min(window, len(x))
    y = np.cos(np.arange(len(x)))
    lhs = sigproc.sma(a * x + b * y, window).values
    rhs = a * sigproc.sma(x, window).values + b * sigproc.sma(y, window).values
    assert np.allclose(lhs, rhs, atol=1e-6)


def test_pearson_examples():
    x = [1.0, 2.0, 5.0, 3.0]
    assert sigproc.pearson(x, x) == pytest.approx(1.0)
    assert sigproc.pearson(x, [-v for v in x]) == pytest.approx(-1.0)
    assert sigproc.pearson([1, 2, 3], [2, 4, 7]) == pytest.approx(brute_pearson([1, 2, 3], [2, 4, 7]), abs=1e-12)
    assert round(sigproc.pearson([1, 2, 3], [2, 4, 7]), 4) == 0.9934


def test_pearson_errors():
    with pytest.raises(LengthMismatch):
        sigproc.pearson([1, 2], [1, 2, 3])
    with pytest.raises(ZeroVariance):
        sigproc.pearson([1, 1, 1], [1, 2, 3])


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=3, max_size=40),
    st.floats(0.1, 10),
    st.floats(-50, 50),
)
def test_pearson_affine_invariance(pairs, scale, shift):
    x = np.array([p[0] for p in pairs])
    y = np.array([p[1] for p in pairs])
    if np.ptp(x) < 1e-3 or np.ptp(y) < 1e-3:
        return
    r = sigproc.pearson(x, y)
    assert sigproc.pearson(scale * x + shift, y) == pytest.approx(r, abs=1e-7)
    assert sigproc.pearson(-scale * x + shift, y) == pytest.approx(-r, abs=1e-7)
    assert -1.0 <= r <= 1.0


def test_constant_current_is_flagged():
    recs = [TelemetryRecord(k * 121, 7 + 0.01 * k, 2.0, 22 + 0.1 * (k % 3)) for k in range(20)]
    cm = sigproc.correlation_matrix(recs)
    assert cm.zero_variance == ("I",)
    assert math.isnan(cm.get("V", "I"))
    assert math.isnan(cm.get("I", "P"))
    assert not math.isnan(cm.get("V", "P"))


def test_current_dominates_power_on_synthetic_drive():
    recs, _ = generate_scenario(preset("drive-noload", "BatteryOnly"), seed=4)
    cm = sigproc.correlation_matrix(recs)
    i = [r.current for r in recs]
    p = [r.power for r in recs]
    assert cm.get("I", "P") == pytest.approx(brute_pearson(i, p), abs=1e-9)
    assert cm.get("I", "P") > 0.99


def test_table_row_rendering():
    r = np.eye(4)
    labels = ("V", "I", "P", "T")
    vals = {("V", "I"): -0.381, ("V", "P"): -0.306, ("I", "P"): 0.993, ("V", "T"): 0.450}
    for (a, b), v in vals.items():
        i, j = labels.index(a), labels.index(b)
        r[i, j] = r[j, i] = v
    cm = sigproc.CorrelationMatrix(labels, r, ())
    text = sigproc.correlation_table_csv([("Towing (Battery)", cm)])
    assert text.splitlines() == ["Scenario,V-I,V-P,I-P,V-T", "Towing (Battery),-0.381,-0.306,0.993,0.450"]


def test_smoothed_csv_alignment():
    sm = sigproc.sma([1.0, 2.0, 3.0], 2)
    lines = sigproc.smoothed_csv([0, 121, 242], [1.0, 2.0, 3.0], sm).splitlines()
    assert lines[0] == "t_ms,raw,sma"
    assert lines[1:] == ["121,2.0,1.5", "242,3.0,2.5"]
