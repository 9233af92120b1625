"""Synthetic NiMH battery + PEM fuel cell telemetry with labeled ground truth.

All model parameters other than the platform's nameplate values (7.2 V /
4000 mAh pack, 30 W fuel cell, 10 L cartridges, 3 L/h / 23 W electrolyzer,
18 V / 1.67 A solar panel) are synthetic choices, not measurements.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .detect import MAD_SCALE, median_mad
from .errors import DepletedBattery, EmptyCartridges, InputError, ZeroPower
from .telemetry import (
    NOMINAL_RATE_HZ,
    STATIC_THROTTLES,
    Environment,
    PowerConfig,
    ScenarioMeta,
    TelemetryRecord,
    Throttle,
)

MOLAR_VOLUME_25C_L = 24.45
H2_MOLAR_MASS_G = 2.016
H2_LHV_MJ_PER_KG = 120.0


# -- component models --------------------------------------------------------

@dataclass(frozen=True)
class BatteryModel:
    capacity_mah: float = 4000.0
    nominal_v: float = 7.2
    internal_resistance_ohm: float = 0.05
    ocv_soc: tuple[float, ...] = (0.0, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
    ocv_v: tuple[float, ...] = (6.0, 6.55, 6.85, 7.05, 7.15, 7.22, 7.28, 7.35, 7.45, 7.6, 7.85, 8.4)

    def ocv(self, soc: float) -> float:
        return float(np.interp(soc, self.ocv_soc, self.ocv_v))

    @property
    def capacity_ah(self) -> float:
        return self.capacity_mah / 1000.0


@dataclass(frozen=True)
class FuelCellModel:
    max_power_w: float = 30.0
    response_lag_s: float = 1.0
    efficiency: float = 0.5
    # recharge power tapers linearly from max at zero demand to 0 at taper_w
    max_recharge_w: float = 5.0
    recharge_taper_w: float = 10.0

    def setpoint(self, demand_w: float, soc: float) -> float:
        recharge = 0.0
        if soc < 1.0:
            recharge = self.max_recharge_w * max(0.0, 1.0 - demand_w / self.recharge_taper_w)
        return min(max(demand_w, 0.0) + recharge, self.max_power_w)

    def follow(self, current_w: float, target_w: float, dt_s: float) -> float:
        if self.response_lag_s <= 0:
            return target_w
        return current_w + (target_w - current_w) * (1.0 - math.exp(-dt_s / self.response_lag_s))


def hydrogen_energy_per_liter(t_c: float = 25.0) -> float:
    """Chemical energy (LHV) of one litre of hydrogen gas, in Wh."""
    molar_volume = MOLAR_VOLUME_25C_L * (t_c + 273.15) / 298.15
    grams = H2_MOLAR_MASS_G / molar_volume
    return grams * H2_LHV_MJ_PER_KG * 1000.0 / 3600.0


@dataclass(frozen=True)
class SolarPanel:
    panel_w: float = 30.0
    vmp: float = 18.0
    imp: float = 1.67


def default_solar_profile(hours: float) -> float:
    """Fraction of the electrolyzer's rated power available from the panel."""
    return 0.65 + 0.2 * math.sin(2.0 * math.pi * hours / 5.0)


@dataclass(frozen=True)
class Electrolyzer:
    max_rate_lph: float = 3.0
    rated_power_w: float = 23.0
    water_ml_per_h: float = 20.0
    # absorption slows as a cartridge fills: rate *= 1 - taper * fill_fraction
    fill_taper: float = 0.4
    cartridge_l: float = 10.0

    def water_ml(self, liters: float) -> float:
        return liters * self.water_ml_per_h / self.max_rate_lph

    def rate_lph(self, power_w: float, filled_l: float) -> float:
        fill = (filled_l % self.cartridge_l) / self.cartridge_l
        return self.max_rate_lph * min(1.0, power_w / self.rated_power_w) * (1.0 - self.fill_taper * fill)


@dataclass
class HydrogenSystem:
    capacity_l: float = 10.0
    pressure_bar: float = 30.0
    remaining_l: list[float] = field(default_factory=lambda: [10.0, 10.0])

    @property
    def total_l(self) -> float:
        return float(sum(self.remaining_l))

    def draw(self, liters: float) -> float:
        """Take up to ``liters`` from the cartridges in order; return what was drawn."""
        if self.total_l <= 0.0:
            raise EmptyCartridges("hydrogen cartridges are empty")
        taken = 0.0
        for k, left in enumerate(self.remaining_l):
            if taken >= liters:
                break
            use = min(left, liters - taken)
            self.remaining_l[k] = left - use
            taken += use
        return taken


def electrolyzer_refill(
    liters_needed: float,
    power_w: float = 23.0,
    solar: bool = False,
    profile: Callable[[float], float] = default_solar_profile,
    electrolyzer: Electrolyzer = Electrolyzer(),
    dt_h: float = 1.0 / 600.0,
) -> float:
    """Hours needed to produce ``liters_needed`` of hydrogen.

    Grid mode runs at ``power_w``; solar mode scales the rated power by
    ``profile(hours)``. The production rate tapers as each cartridge fills.
    """
    if liters_needed < 0:
        raise InputError("liters_needed must be >= 0")
    if liters_needed == 0:
        return 0.0
    if power_w <= 0:
        raise ZeroPower("electrolyzer needs positive power")
    filled = 0.0
    hours = 0.0
    max_hours = 1000.0
    while hours < max_hours:
        p = power_w * profile(hours) if solar else power_w
        rate = electrolyzer.rate_lph(max(p, 0.0), filled)
        step = rate * dt_h
        if filled + step >= liters_needed:
            return hours + (liters_needed - filled) / rate * 1.0
        filled += step
        hours += dt_h
    raise ZeroPower("supply too weak to finish the refill")


def grid_refill_hours_exact(liters: float, power_w: float = 23.0, electrolyzer: Electrolyzer = Electrolyzer()) -> float:
    """Closed-form refill time for a single cartridge (``liters`` <= capacity)."""
    r = electrolyzer.max_rate_lph * min(1.0, power_w / electrolyzer.rated_power_w)
    a = electrolyzer.fill_taper
    c = electrolyzer.cartridge_l
    if a == 0:
        return liters / r
    return -c / (r * a) * math.log(1.0 - a * liters / c)


# -- powertrain ---------------------------------------------------------------

@dataclass(frozen=True)
class PowertrainConfig:
    power_config: PowerConfig = PowerConfig.HYBRID
    battery: BatteryModel = BatteryModel()
    fuel_cell: FuelCellModel = FuelCellModel()
    ambient_c: float = 22.0
    # battery temperature rises with current; first-order thermal response
    heat_c_per_a: float = 1.5
    thermal_tau_s: float = 90.0
    pressure_pa: float = 98200.0
    altitude_m: float = 266.0


@dataclass
class PowertrainState:
    soc: float = 0.95
    fc_power_w: float = 0.0
    temperature_c: float = 22.0
    bus_v: Optional[float] = None
    step: int = 0
    t_ms: int = 0
    hydrogen: HydrogenSystem = field(default_factory=HydrogenSystem)
    fc_available: bool = True
    battery_wh_out: float = 0.0
    fc_wh_out: float = 0.0
    h2_l_consumed: float = 0.0
    events: list[str] = field(default_factory=list)

    def copy(self) -> "PowertrainState":
        return replace(
            self,
            hydrogen=HydrogenSystem(self.hydrogen.capacity_l, self.hydrogen.pressure_bar, list(self.hydrogen.remaining_l)),
            events=list(self.events),
        )


def _bus_voltage(ocv: float, demand_a: float, fc_power_w: float, r: float) -> float:
    # ocv - (demand - p_fc / V) * r = V  solved for V > 0
    b = ocv - demand_a * r
    return 0.5 * (b + math.sqrt(b * b + 4.0 * fc_power_w * r))


def step_powertrain(
    state: PowertrainState,
    demand_a: float,
    dt_s: float,
    config: PowertrainConfig = PowertrainConfig(),
    rate_hz: float = NOMINAL_RATE_HZ,
) -> tuple[TelemetryRecord, PowertrainState]:
    """Advance the powertrain by one sample and return the logged record.

    The record's ``current`` is the load current drawn from the power unit;
    its ``voltage`` is the battery terminal (bus) voltage.
    """
    if dt_s <= 0:
        raise InputError("dt_s must be > 0")
    s = state.copy()
    bat = config.battery
    fc = config.fuel_cell
    r = bat.internal_resistance_ohm
    ocv = bat.ocv(s.soc)
    v_est = s.bus_v if s.bus_v is not None else ocv

    p_fc = 0.0
    if config.power_config is PowerConfig.HYBRID and s.fc_available:
        target = fc.setpoint(demand_a * v_est, s.soc)
        p_fc = min(max(fc.follow(s.fc_power_w, target, dt_s), 0.0), fc.max_power_w)
        wh = p_fc * dt_s / 3600.0
        liters = wh / (hydrogen_energy_per_liter() * fc.efficiency)
        try:
            got = s.hydrogen.draw(liters)
        except EmptyCartridges:
            got = 0.0
        if got < liters:
            p_fc *= got / liters
            s.fc_available = False
            s.events.append(f"EmptyCartridges at step {s.step}: falling back to battery-only")
        s.h2_l_consumed += got
    s.fc_power_w = p_fc

    v = max(_bus_voltage(ocv, demand_a, p_fc, r), 0.0)
    i_fc = p_fc / v if v > 0 else 0.0
    i_bat = demand_a - i_fc
    soc = s.soc - i_bat * dt_s / 3600.0 / bat.capacity_ah
    if soc <= 0.0:
        raise DepletedBattery(f"battery depleted at step {s.step}")
    s.soc = min(soc, 1.0)
    s.battery_wh_out += v * i_bat * dt_s / 3600.0
    s.fc_wh_out += v * i_fc * dt_s / 3600.0
    target_t = config.ambient_c + config.heat_c_per_a * abs(i_bat)
    s.temperature_c += (target_t - s.temperature_c) * (1.0 - math.exp(-dt_s / config.thermal_tau_s))
    s.bus_v = v

    record = TelemetryRecord(
        t_ms=s.t_ms,
        voltage=v,
        current=demand_a,
        temperature=s.temperature_c,
        pressure=config.pressure_pa,
        altitude=config.altitude_m,
    )
    s.step += 1
    s.t_ms = int(round(s.step * 1000.0 / rate_hz))
    return record, s


# -- demand profiles ------------------------------------------------------------

STATIC_CURRENT_A = {Throttle.P25: 1.5, Throttle.P50: 3.0, Throttle.P75: 4.5, Throttle.P100: 6.0}
LOAD_GAIN_PER_KG = 0.20
TOWING_GAIN_PER_KG = 0.15
OUTDOOR_GAIN = 0.10
# driving levels (A) and their selection weights for the dynamic profile
DRIVE_LEVELS_A = (0.6, 2.0, 3.2, 4.4)
DRIVE_WEIGHTS = (0.15, 0.35, 0.35, 0.15)


def _clipped_normal(rng: np.random.Generator, n: int, sigma: float, clip: float = 2.5) -> np.ndarray:
    return np.clip(rng.standard_normal(n), -clip, clip) * sigma


def demand_gain(load_kg: float, towing_kg: float, environment: Environment) -> float:
    gain = 1.0 + LOAD_GAIN_PER_KG * load_kg + TOWING_GAIN_PER_KG * towing_kg
    if Environment(environment) is Environment.OUTDOOR_ASPHALT:
        gain *= 1.0 + OUTDOOR_GAIN
    return gain


def throttle_to_demand(
    throttle: Throttle,
    load_kg: float,
    towing_kg: float,
    environment: Environment,
    n_samples: int,
    rng: np.random.Generator,
    jitter_a: float = 0.12,
    rate_hz: float = NOMINAL_RATE_HZ,
) -> np.ndarray:
    """Load current (A) per sample.

    Static throttles hold a constant level; ``Dynamic`` strings together
    driving segments of 3-12 s, low-pass filtered. Jitter is zero-mean
    Gaussian clipped at 2.5 sigma so the clean signal has no outliers of
    its own. Load and towing scale the whole profile.
    """
    if n_samples <= 0:
        return np.zeros(0)
    throttle = Throttle(throttle)
    if throttle.is_static:
        base = np.full(n_samples, STATIC_CURRENT_A[throttle])
    else:
        base = np.empty(n_samples)
        k = 0
        while k < n_samples:
            length = int(rng.uniform(3.0, 12.0) * rate_hz)
            base[k : k + length] = rng.choice(DRIVE_LEVELS_A, p=DRIVE_WEIGHTS)
            k += length
        alpha = 1.0 - math.exp(-1.0 / (0.8 * rate_hz))
        smooth = np.empty(n_samples)
        acc = base[0]
        for j, value in enumerate(base):
            acc += alpha * (value - acc)
            smooth[j] = acc
        base = smooth
    demand = (base + _clipped_normal(rng, n_samples, jitter_a)) * demand_gain(load_kg, towing_kg, environment)
    return np.maximum(demand, 0.0)


# -- scenarios -----------------------------------------------------------------

@dataclass(frozen=True)
class TruthSpec:
    """What to inject on top of the physics.

    ``spikes`` are ``(index, z)`` pairs: the sample is moved so its modified
    Z-score against the clean signal equals ``z``. ``level_shifts`` are
    ``(index, delta_v)`` steps applied from ``index`` onward.
    """

    spikes: tuple[tuple[int, float], ...] = ()
    level_shifts: tuple[tuple[int, float], ...] = ()


@dataclass
class SynthTruth:
    injected_anomaly_indices: list[int]
    spike_deltas_v: list[float]
    true_change_points: list[int]
    level_shift_deltas_v: list[float]
    throttle_class_per_sample: list[int]
    energy_ledger: dict[str, float]
    events: list[str] = field(default_factory=list)

    def voltage_offsets(self, n: int) -> np.ndarray:
        """Injected voltage offset per sample (spikes plus level shifts)."""
        off = np.zeros(n)
        for idx, delta in zip(self.true_change_points, self.level_shift_deltas_v):
            off[idx:] += delta
        for idx, delta in zip(self.injected_anomaly_indices, self.spike_deltas_v):
            off[idx] += delta
        return off

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


def powertrain_config_for(meta: ScenarioMeta) -> PowertrainConfig:
    if meta.environment is Environment.OUTDOOR_ASPHALT:
        return PowertrainConfig(power_config=meta.power_config, ambient_c=15.0, heat_c_per_a=2.5)
    return PowertrainConfig(power_config=meta.power_config)


def generate_scenario(
    meta: ScenarioMeta,
    truth_spec: TruthSpec = TruthSpec(),
    seed: int = 0,
    jitter_a: float = 0.12,
    initial_soc: float = 0.95,
    config: Optional[PowertrainConfig] = None,
    fc_warm_start: bool = False,
) -> tuple[list[TelemetryRecord], SynthTruth]:
    """Simulate ``meta`` and apply the injections in ``truth_spec``.

    ``fc_warm_start`` starts the fuel cell at its steady setpoint for the
    first sample instead of ramping up from zero.
    """
    rng = np.random.default_rng(seed)
    n = meta.n_samples
    demand = throttle_to_demand(
        meta.throttle, meta.load_kg, meta.towing_kg, meta.environment, n, rng, jitter_a, meta.nominal_rate_hz
    )
    config = config or powertrain_config_for(meta)
    state = PowertrainState(soc=initial_soc, temperature_c=config.ambient_c)
    if fc_warm_start and n and config.power_config is PowerConfig.HYBRID:
        ocv = config.battery.ocv(initial_soc)
        state.fc_power_w = config.fuel_cell.setpoint(float(demand[0]) * ocv, initial_soc)
    dt = 1.0 / meta.nominal_rate_hz
    clean: list[TelemetryRecord] = []
    for d in demand:
        rec, state = step_powertrain(state, float(d), dt, config, meta.nominal_rate_hz)
        clean.append(rec)

    temp_noise = rng.normal(0.0, 0.05, n)
    v = np.array([r.voltage for r in clean])
    cps, shifts = [], []
    for idx, delta in sorted(truth_spec.level_shifts):
        if not 0 < idx < n:
            raise InputError(f"level shift index {idx} outside (0, {n})")
        cps.append(int(idx))
        shifts.append(float(delta))
    shifted = v.copy()
    for idx, delta in zip(cps, shifts):
        shifted[idx:] += delta

    spike_idx, spike_delta = [], []
    if truth_spec.spikes:
        med, mad = median_mad(shifted)
        for idx, z in sorted(truth_spec.spikes):
            if not 0 <= idx < n:
                raise InputError(f"spike index {idx} outside [0, {n})")
            target = med + z * mad / MAD_SCALE
            spike_idx.append(int(idx))
            spike_delta.append(float(target - shifted[idx]))
    observed = shifted.copy()
    for idx, delta in zip(spike_idx, spike_delta):
        observed[idx] += delta

    records = [
        TelemetryRecord(r.t_ms, float(observed[k]), r.current, r.temperature + float(temp_noise[k]), r.pressure, r.altitude)
        for k, r in enumerate(clean)
    ]
    label = meta.throttle.label if meta.is_static else -1
    bus_wh = float(sum(r.voltage * r.current for r in clean) * dt / 3600.0)
    truth = SynthTruth(
        injected_anomaly_indices=spike_idx,
        spike_deltas_v=spike_delta,
        true_change_points=cps,
        level_shift_deltas_v=shifts,
        throttle_class_per_sample=[label] * n,
        energy_ledger={
            "battery_wh_out": state.battery_wh_out,
            "fc_wh_out": state.fc_wh_out,
            "h2_l_consumed": state.h2_l_consumed,
            "bus_wh": bus_wh,
            "final_soc": state.soc,
        },
        events=state.events,
    )
    return records, truth


def random_spikes(
    n: int, count: int, rng: np.random.Generator, z_min: float = 4.0, z_max: float = 8.0, margin: int = 5
) -> tuple[tuple[int, float], ...]:
    """``count`` spike positions at least ``margin`` apart with random sign."""
    chosen: list[int] = []
    pool = rng.permutation(np.arange(margin, n - margin))
    for idx in pool:
        if all(abs(int(idx) - c) >= margin for c in chosen):
            chosen.append(int(idx))
        if len(chosen) == count:
            break
    if len(chosen) < count:
        raise InputError(f"cannot place {count} spikes in {n} samples")
    zs = rng.uniform(z_min, z_max, count) * rng.choice([-1.0, 1.0], count)
    return tuple(sorted(zip(chosen, (float(z) for z in zs))))


# scenario catalog: name -> (throttle, load, towing, environment, duration)
PRESETS: dict[str, tuple[Throttle, float, float, Environment, float]] = {
    "static-p25": (Throttle.P25, 0.0, 0.0, Environment.INDOOR_LAB, 60.0),
    "static-p50": (Throttle.P50, 0.0, 0.0, Environment.INDOOR_LAB, 60.0),
    "static-p75": (Throttle.P75, 0.0, 0.0, Environment.INDOOR_LAB, 60.0),
    "static-p100": (Throttle.P100, 0.0, 0.0, Environment.INDOOR_LAB, 60.0),
    "drive-noload": (Throttle.DYNAMIC, 0.0, 0.0, Environment.INDOOR_LAB, 600.0),
    "drive-1kg": (Throttle.DYNAMIC, 1.0, 0.0, Environment.INDOOR_LAB, 600.0),
    "towing-3kg": (Throttle.DYNAMIC, 0.0, 3.0, Environment.INDOOR_LAB, 300.0),
    "outdoor": (Throttle.DYNAMIC, 0.0, 0.0, Environment.OUTDOOR_ASPHALT, 300.0),
}


def preset(name: str, power_config: PowerConfig | str = PowerConfig.HYBRID) -> ScenarioMeta:
    try:
        throttle, load, tow, env, duration = PRESETS[name]
    except KeyError:
        raise InputError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    pc = PowerConfig(power_config)
    suffix = "battery" if pc is PowerConfig.BATTERY_ONLY else "hybrid"
    return ScenarioMeta(
        id=f"{name}-{suffix}",
        power_config=pc,
        throttle=throttle,
        load_kg=load,
        towing_kg=tow,
        environment=env,
        duration_s=duration,
    )


def preset_catalog() -> list[ScenarioMeta]:
    return [preset(name, pc) for name in PRESETS for pc in PowerConfig]


def throttle_runs(
    samples_per_config: int = 5000, jitter_a: float = 0.12, seed: int = 0
) -> list[tuple[list[TelemetryRecord], ScenarioMeta]]:
    """Static runs for all four throttles in both configurations.

    Each configuration contributes ``samples_per_config`` samples split
    evenly over the throttles. ``jitter_a`` controls band overlap: 0.12 A
    keeps the 1.5 A-spaced current bands apart, ~0.6 A makes adjacent
    bands overlap.
    """
    runs = []
    per_run = samples_per_config // len(STATIC_THROTTLES)
    for c, pc in enumerate(PowerConfig):
        for k, throttle in enumerate(STATIC_THROTTLES):
            meta = ScenarioMeta(
                id=f"throttle-{throttle.value}-{pc.value}",
                power_config=pc,
                throttle=throttle,
                duration_s=per_run / NOMINAL_RATE_HZ + 1e-9,
            )
            records, _ = generate_scenario(meta, seed=seed * 1000 + c * 10 + k, jitter_a=jitter_a)
            runs.append((records[:per_run], meta))
    return runs
