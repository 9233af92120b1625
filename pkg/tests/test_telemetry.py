from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridtel.errors import MalformedHeader, MalformedMeta, MalformedRow, NonMonotonicTime
from hybridtel.telemetry import (
    HEADER,
    Environment,
    PowerConfig,
    ScenarioMeta,
    TelemetryRecord,
    Throttle,
    channel,
    parse_log,
    parse_meta,
    validate_series,
    write_log,
    write_meta,
)

HEAD = ",".join(HEADER) + "\n"


def _meta(**kw) -> ScenarioMeta:
    base = dict(id="t", power_config="Hybrid", throttle="P50", duration_s=60.0)
    base.update(kw)
    return ScenarioMeta(**base)


def test_row_with_blank_optional_columns():
    (rec,) = parse_log(HEAD + "0,7.20,1.00,,22.5,,\n")
    assert rec.t_ms == 0
    assert rec.voltage == 7.2 and rec.current == 1.0
    assert rec.power == pytest.approx(7.2)
    assert rec.temperature == 22.5
    assert rec.pressure is None and rec.altitude is None


def test_power_column_is_recomputed():
    (rec,) = parse_log(HEAD + "0,7.0,2.0,999,22,98000,266\n")
    assert rec.power == pytest.approx(14.0)


def test_observed_rate_from_three_samples():
    recs = parse_log(HEAD + "0,7,1,,22,,\n121,7,1,,22,,\n242,7,1,,22,,\n")
    report = validate_series(recs, _meta())
    assert report.observed_rate_hz == pytest.approx(2 / 0.242)
    assert round(report.observed_rate_hz, 2) == 8.26


def test_decreasing_time_is_rejected_with_line_number():
    with pytest.raises(NonMonotonicTime) as err:
        parse_log(HEAD + "0,7,1,,22,,\n121,7,1,,22,,\n100,7,1,,22,,\n")
    assert err.value.line_no == 4


@pytest.mark.parametrize(
    "text, exc",
    [
        ("a,b,c\n0,7,1,,22,,\n", MalformedHeader),
        (HEAD + "0,7,1,22\n", MalformedRow),
        (HEAD + "0,seven,1,,22,,\n", MalformedRow),
        (HEAD + "0,nan,1,,22,,\n", MalformedRow),
        (HEAD + "0,-1,1,,22,,\n", MalformedRow),
    ],
)
def test_malformed_inputs(text, exc):
    with pytest.raises(exc):
        parse_log(text)


def _uniform(n: int, step: int = 121) -> list[TelemetryRecord]:
    return [TelemetryRecord(k * step, 7.2, 1.0, 22.0) for k in range(n)]


def test_uniform_spacing_has_no_gaps():
    report = validate_series(_uniform(50), _meta())
    assert report.gaps == [] and report.monotonic


def test_single_gap_reported_at_later_sample():
    t = [k * 121 for k in range(10)] + [9 * 121 + 500] + [9 * 121 + 500 + 121 * k for k in range(1, 10)]
    recs = [TelemetryRecord(tt, 7.2, 1.0, 22.0) for tt in t]
    assert validate_series(recs, _meta()).gaps == [(10, 500)]


def test_single_record_has_undefined_rate():
    report = validate_series(_uniform(1), _meta())
    assert report.observed_rate_hz is None
    assert report.monotonic and report.gaps == []


def test_empty_log_is_header_only():
    assert write_log([]) == HEAD.encode()
    assert parse_log(HEAD) == []


def test_canonical_round_trip_is_byte_identical():
    text = HEAD + "0,7.2,1.0,7.2,22.5,,\n121,7.1,1.5,10.65,22.6,98200.0,266.0\n"
    once = write_log(parse_log(text))
    assert write_log(parse_log(once)) == once


def test_hundred_records_round_trip():
    rng = np.random.default_rng(1)
    recs = [
        TelemetryRecord(k * 121, float(rng.uniform(6, 8.4)), float(rng.uniform(0, 6)), float(rng.normal(25, 2)),
                        float(rng.uniform(9e4, 1e5)), None)
        for k in range(100)
    ]
    assert parse_log(write_log(recs)) == recs


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 20, allow_nan=False), st.floats(-10, 10, allow_nan=False),
                          st.floats(-40, 90, allow_nan=False)), min_size=1, max_size=30))
def test_round_trip_property(rows):
    recs = [TelemetryRecord(k * 121, v, i, t) for k, (v, i, t) in enumerate(rows)]
    back = parse_log(write_log(recs))
    for a, b in zip(recs, back):
        assert abs(a.voltage - b.voltage) <= 1e-9 and abs(a.current - b.current) <= 1e-9
        assert abs(a.temperature - b.temperature) <= 1e-9


def test_meta_sidecar_round_trip():
    meta = ScenarioMeta("tow", PowerConfig.BATTERY_ONLY, Throttle.DYNAMIC, 0.0, 3.0, Environment.OUTDOOR_ASPHALT, 300.0)
    assert parse_meta(write_meta(meta)) == meta
    assert meta.n_samples == int(300 * 8.25)
    assert not meta.is_static


def test_meta_rejects_garbage():
    with pytest.raises(MalformedMeta):
        parse_meta("no equals sign here\n")


def test_channel_extraction():
    recs = _uniform(3)
    assert channel(recs, "power").tolist() == pytest.approx([7.2] * 3)
    assert channel(recs, "t_ms").tolist() == [0, 121, 242]
