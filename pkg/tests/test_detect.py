from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridtel import detect as det
from hybridtel.errors import DegenerateWarning, SeriesTooLong, SeriesTooShort


def brute_cost(x) -> float:
    x = np.asarray(x, float)
    return float(((x - x.mean()) ** 2).sum())


def brute_partition(x, penalty, min_size=2):
    """Exhaustive search over all admissible change-point sets (tiny n only)."""
    n = len(x)
    best = (math.inf, None)
    for mask in range(1 << max(n - 1, 0)):
        cps = [k for k in range(1, n) if mask >> (k - 1) & 1]
        bounds = [0, *cps, n]
        if any(b - a < min_size for a, b in zip(bounds, bounds[1:])):
            continue
        total = sum(brute_cost(x[a:b]) for a, b in zip(bounds, bounds[1:])) + penalty * len(cps)
        if total < best[0] - 1e-9:
            best = (total, cps)
    return best


def test_modified_zscore_example():
    z = det.modified_zscore([1, 2, 3, 4, 100])
    assert z[4] == pytest.approx(0.6745 * 97)
    assert z[4] == pytest.approx(65.4265)
    assert z[0] == pytest.approx(-1.349)


def test_constant_series_is_degenerate():
    with pytest.warns(DegenerateWarning):
        z = det.modified_zscore([5, 5, 5, 5])
    assert z.tolist() == [0, 0, 0, 0]
    report = det.detect_anomalies([5.0] * 20)
    assert report.indices == [] and report.degenerate


def test_scores_are_odd():
    z = det.modified_zscore([-3.0, 0.0, 3.0])
    assert z[0] == pytest.approx(-z[2]) and z[1] == 0


def test_detect_example():
    report = det.detect_anomalies([1, 2, 3, 4, 100], 3)
    assert report.indices == [4]
    assert report.spike_threshold_v == pytest.approx(3 / 0.6745)
    assert round(report.spike_threshold_v, 3) == 4.448


def test_segment_cost():
    x = np.array([0.0, 0.0, 5.0, 5.0])
    pre = det.prefix_sums(x)
    assert det.segment_cost_l2(pre, 0, 4) == pytest.approx(25.0)
    assert det.segment_cost_l2(pre, 0, 2) == 0.0
    y = np.array([3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0])
    pre = det.prefix_sums(y)
    for i in range(7):
        for j in range(i + 1, 8):
            assert det.segment_cost_l2(pre, i, j) == pytest.approx(brute_cost(y[i:j]), abs=1e-9)


def test_pelt_examples():
    assert det.pelt([3.0] * 40, 1.0).change_points == []
    step = [0.0] * 50 + [5.0] * 50
    assert det.pelt(step, 10).change_points == [50]
    assert det.optimal_partition_oracle(step, 10).change_points == [50]
    assert det.pelt(np.sin(np.arange(100)), 1e12).change_points == []
    two = [0.0] * 30 + [5.0] * 30 + [0.0] * 30
    assert det.optimal_partition_oracle(two, 10).change_points == [30, 60]
    assert det.pelt(two, 10).change_points == [30, 60]


def test_report_segments_and_means():
    rep = det.pelt([0.0] * 10 + [2.0] * 10, 1.0)
    assert rep.segments == [(0, 10), (10, 20)]
    assert rep.segment_means == pytest.approx([0.0, 2.0])
    assert rep.total_cost == pytest.approx(1.0)


@pytest.mark.parametrize("seed", range(8))
def test_pelt_matches_exhaustive_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 13))
    x = rng.normal(0, 1, n) + np.repeat(rng.normal(0, 3, 3), -(-n // 3))[:n]
    for penalty in (0.1, 1.0, 5.0):
        total, cps = brute_partition(x, penalty)
        rep = det.pelt(x, penalty)
        assert rep.change_points == cps
        assert rep.total_cost == pytest.approx(total, abs=1e-9)


def test_oracle_size_limit():
    with pytest.raises(SeriesTooLong):
        det.optimal_partition_oracle(np.zeros(det.ORACLE_MAX_N + 1), 1.0)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=4, max_size=60), st.floats(0.01, 50), st.floats(1.01, 10))
def test_more_penalty_never_adds_change_points(xs, p, factor):
    assert len(det.pelt(xs, p * factor).change_points) <= len(det.pelt(xs, p).change_points)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(-20, 20), min_size=4, max_size=60), st.floats(0.5, 30), st.integers(-100, 100),
       st.integers(1, 8))
def test_pelt_shift_and_scale_invariance(xs, p, shift, scale):
    # integer data keeps the shifted and scaled costs exact
    x = np.array(xs, float)
    base = det.pelt(x, p).change_points
    assert det.pelt(x + shift, p).change_points == base
    assert det.pelt(x * scale, p * scale * scale).change_points == base


def test_default_penalty_tracks_noise():
    for seed in range(10):
        rng = np.random.default_rng(seed)
        sigma = 0.3
        x = rng.normal(0, sigma, 500)
        ref = 2 * sigma**2 * math.log(500)
        assert ref / 2 <= det.default_penalty(x) <= 2 * ref


def test_default_penalty_degenerate():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        assert det.default_penalty([1.0] * 30) == 0.0
    assert any(issubclass(w.category, DegenerateWarning) for w in caught)
    with pytest.raises(SeriesTooShort):
        det.default_penalty([1.0, 2.0])


def test_twenty_six_spikes_on_hybrid_static_run():
    from hybridtel import synth

    meta = synth.preset("static-p75", "Hybrid")
    spikes = synth.random_spikes(meta.n_samples, 26, np.random.default_rng(26))
    records, truth = synth.generate_scenario(meta, synth.TruthSpec(spikes=spikes), seed=26, fc_warm_start=True)
    found = det.detect_anomalies([r.voltage for r in records]).indices
    assert found == truth.injected_anomaly_indices
    assert len(found) == 26
