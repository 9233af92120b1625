"""Telemetry data model, CSV log format and sampling checks."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (
    EmptySeries,
    MalformedHeader,
    MalformedMeta,
    MalformedRow,
    NonMonotonicTime,
)

HEADER = ("t_ms", "voltage_v", "current_a", "power_w", "temp_c", "pressure_pa", "altitude_m")
NOMINAL_RATE_HZ = 8.25


class PowerConfig(str, enum.Enum):
    BATTERY_ONLY = "BatteryOnly"
    HYBRID = "Hybrid"


class Throttle(str, enum.Enum):
    P25 = "P25"
    P50 = "P50"
    P75 = "P75"
    P100 = "P100"
    DYNAMIC = "Dynamic"

    @property
    def is_static(self) -> bool:
        return self is not Throttle.DYNAMIC

    @property
    def label(self) -> int:
        """Class index 0..3 for the static throttle levels."""
        if not self.is_static:
            raise ValueError("dynamic scenarios carry no throttle class")
        return STATIC_THROTTLES.index(self)


STATIC_THROTTLES = (Throttle.P25, Throttle.P50, Throttle.P75, Throttle.P100)


class Environment(str, enum.Enum):
    INDOOR_LAB = "IndoorLab"
    OUTDOOR_ASPHALT = "OutdoorAsphalt"


@dataclass(frozen=True)
class TelemetryRecord:
    """One sample. ``power`` is always derived from voltage and current."""

    t_ms: int
    voltage: float
    current: float
    temperature: float
    pressure: Optional[float] = None
    altitude: Optional[float] = None
    power: float = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "power", self.voltage * self.current)


@dataclass(frozen=True)
class ScenarioMeta:
    id: str
    power_config: PowerConfig
    throttle: Throttle
    load_kg: float = 0.0
    towing_kg: float = 0.0
    environment: Environment = Environment.INDOOR_LAB
    duration_s: float = 60.0
    nominal_rate_hz: float = NOMINAL_RATE_HZ

    def __post_init__(self) -> None:
        object.__setattr__(self, "power_config", PowerConfig(self.power_config))
        object.__setattr__(self, "throttle", Throttle(self.throttle))
        object.__setattr__(self, "environment", Environment(self.environment))
        if self.duration_s < 0 or self.nominal_rate_hz <= 0:
            raise MalformedMeta("duration_s must be >= 0 and nominal_rate_hz > 0")
        if self.load_kg < 0 or self.towing_kg < 0:
            raise MalformedMeta("load_kg and towing_kg must be >= 0")

    @property
    def is_static(self) -> bool:
        return self.throttle.is_static

    @property
    def n_samples(self) -> int:
        return int(math.floor(self.duration_s * self.nominal_rate_hz))


@dataclass(frozen=True)
class ValidationReport:
    n_samples: int
    observed_rate_hz: Optional[float]
    gaps: list[tuple[int, int]]
    monotonic: bool


def _fmt(value: Optional[float]) -> str:
    if value is None:
        return ""
    return repr(float(value))


def _parse_float(text: str, line_no: int, name: str, optional: bool = False) -> Optional[float]:
    text = text.strip()
    if text == "":
        if optional:
            return None
        raise MalformedRow(line_no, f"missing {name}")
    try:
        value = float(text)
    except ValueError:
        raise MalformedRow(line_no, f"bad {name} {text!r}") from None
    if not math.isfinite(value):
        raise MalformedRow(line_no, f"non-finite {name}")
    return value


def parse_log(data: bytes | str) -> list[TelemetryRecord]:
    """Parse a CSV telemetry log.

    Rows keep file order. The ``power_w`` column is read for shape only;
    power is recomputed from voltage and current. Line numbers in errors
    are 1-based and count the header.
    """
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    lines = text.splitlines()
    if not lines or tuple(c.strip() for c in lines[0].split(",")) != HEADER:
        raise MalformedHeader(f"expected header {','.join(HEADER)}")

    records: list[TelemetryRecord] = []
    last_t: Optional[int] = None
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cols = line.split(",")
        if len(cols) != len(HEADER):
            raise MalformedRow(line_no, f"expected {len(HEADER)} columns, got {len(cols)}")
        try:
            t_ms = int(cols[0].strip())
        except ValueError:
            raise MalformedRow(line_no, f"bad t_ms {cols[0]!r}") from None
        voltage = _parse_float(cols[1], line_no, "voltage_v")
        current = _parse_float(cols[2], line_no, "current_a")
        _parse_float(cols[3], line_no, "power_w", optional=True)
        temperature = _parse_float(cols[4], line_no, "temp_c")
        pressure = _parse_float(cols[5], line_no, "pressure_pa", optional=True)
        altitude = _parse_float(cols[6], line_no, "altitude_m", optional=True)
        if voltage < 0:
            raise MalformedRow(line_no, "negative voltage")
        if last_t is not None and t_ms <= last_t:
            raise NonMonotonicTime(line_no)
        last_t = t_ms
        records.append(TelemetryRecord(t_ms, voltage, current, temperature, pressure, altitude))
    return records


def write_log(records: Iterable[TelemetryRecord], meta: Optional[ScenarioMeta] = None) -> bytes:
    """Serialize records in canonical form (shortest round-trip float repr).

    ``meta`` is accepted for symmetry with the sidecar writer; the CSV
    itself carries no metadata.
    """
    out = [",".join(HEADER)]
    for r in records:
        out.append(
            ",".join(
                (
                    str(int(r.t_ms)),
                    _fmt(r.voltage),
                    _fmt(r.current),
                    _fmt(r.power),
                    _fmt(r.temperature),
                    _fmt(r.pressure),
                    _fmt(r.altitude),
                )
            )
        )
    return ("\n".join(out) + "\n").encode("utf-8")


def validate_series(records: Sequence[TelemetryRecord], meta: ScenarioMeta) -> ValidationReport:
    """Check sampling integrity against the scenario's nominal rate.

    A gap is reported as ``(index, spacing_ms)`` where ``index`` is the
    sample that ends the gap.
    """
    if not records:
        raise EmptySeries("no records")
    t = np.array([r.t_ms for r in records], dtype=np.int64)
    n = len(t)
    if n < 2:
        return ValidationReport(n, None, [], True)
    diffs = np.diff(t)
    limit = 2.0 * 1000.0 / meta.nominal_rate_hz
    gaps = [(int(i + 1), int(d)) for i, d in enumerate(diffs) if d > limit]
    span_s = (t[-1] - t[0]) / 1000.0
    rate = (n - 1) / span_s if span_s > 0 else None
    return ValidationReport(n, rate, gaps, bool(np.all(diffs > 0)))


def channel(records: Sequence[TelemetryRecord], name: str) -> np.ndarray:
    """Extract one channel (voltage, current, power, temperature) as an array."""
    aliases = {"v": "voltage", "i": "current", "p": "power", "t": "temperature", "temp": "temperature"}
    attr = aliases.get(name.lower(), name.lower())
    if attr not in ("voltage", "current", "power", "temperature", "pressure", "altitude", "t_ms"):
        raise ValueError(f"unknown channel {name!r}")
    return np.array([getattr(r, attr) for r in records], dtype=float)


# -- metadata sidecar --------------------------------------------------------

def write_meta(meta: ScenarioMeta) -> str:
    lines = []
    for f in fields(meta):
        value = getattr(meta, f.name)
        if isinstance(value, enum.Enum):
            value = value.value
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def parse_meta(text: str) -> ScenarioMeta:
    values: dict[str, str] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise MalformedMeta(f"line {line_no}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    known = {f.name for f in fields(ScenarioMeta)}
    unknown = set(values) - known
    if unknown:
        raise MalformedMeta(f"unknown keys: {sorted(unknown)}")
    try:
        kwargs: dict = {"id": values["id"], "power_config": values["power_config"], "throttle": values["throttle"]}
        for key in ("load_kg", "towing_kg", "duration_s", "nominal_rate_hz"):
            if key in values:
                kwargs[key] = float(values[key])
        if "environment" in values:
            kwargs["environment"] = values["environment"]
        return ScenarioMeta(**kwargs)
    except KeyError as exc:
        raise MalformedMeta(f"missing key {exc.args[0]}") from None
    except ValueError as exc:
        if isinstance(exc, MalformedMeta):
            raise
        raise MalformedMeta(str(exc)) from None
