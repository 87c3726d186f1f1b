"""Lumped-parameter thermal plant for the 3x3 array.

Each channel is a cold-plate lump (the surface the palm touches) coupled
to its module's hot face; the hot face is held quasi-statically against
the shared water bus (heatsink mass is negligible next to the water),
and the bus exchanges with a constant-temperature reservoir through the
volumetric flow.  Sensors are first-order lags on the plate temperature
with additive Gaussian noise.

State is integrated with fixed-step RK4 at 1 kHz substeps and decimated
to the control tick.  Plant temperatures live in degrees Celsius; the
Peltier term converts to kelvin internally.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from palmtherm.tem import CoolantParams, TemParams

# The compiled single-step kernel shares its arithmetic with the batch
# kernel; PALMTHERM_KERNEL=python forces the pure path here as well.
# Importing the extension directly (not the _kernel package) avoids a
# circular import through the pure-Python reference kernel.
if os.environ.get("PALMTHERM_KERNEL", "").strip().lower() in ("python", "ref"):
    _fast = None
else:
    try:
        from palmtherm._kernel import _fast
    except ImportError:
        _fast = None

N_CELLS = 9
KELVIN_OFFSET = 273.15
SUBSTEP_S = 1e-3          # internal integration step
SIM_T_MIN = 0.0           # C, simulation safety envelope
SIM_T_MAX = 80.0


class SimulationDiverged(RuntimeError):
    """Plant state left the safety envelope or became non-finite."""

    def __init__(self, msg: str, tick: int | None = None):
        super().__init__(msg)
        self.tick = tick


class CurrentLimitError(ValueError):
    """A commanded drive current exceeds the module rating."""


class ProfileDomainError(ValueError):
    """A profile was sampled outside its declared time domain."""


@dataclass
class ChannelThermalModel:
    """Fitted lumped constants for one channel."""

    heat_capacity: float            # J/K, cold-plate lump
    g_skin: float                   # W/K, plate <-> skin coupling
    g_sink: float                   # W/K, hot face <-> water bus
    skin_core_temp: float = 33.0    # C, deep-tissue boundary
    sensor_lag_tau: float = 0.05    # s
    sensor_noise_sigma: float = 0.05  # C rms

    def __post_init__(self) -> None:
        if self.heat_capacity <= 0 or self.g_skin <= 0 or self.g_sink <= 0:
            raise ValueError("heat_capacity, g_skin and g_sink must be positive")
        if not 20.0 <= self.skin_core_temp <= 42.0:
            raise ValueError(f"skin_core_temp {self.skin_core_temp} C implausible")
        if self.sensor_lag_tau < 0 or self.sensor_noise_sigma < 0:
            raise ValueError("sensor lag and noise must be non-negative")


def uniform_channels(model: ChannelThermalModel,
                     n: int = N_CELLS) -> list[ChannelThermalModel]:
    return [replace(model) for _ in range(n)]


def with_skin_spread(model: ChannelThermalModel, spread: float = 0.3,
                     seed: int = 0, n: int = N_CELLS) -> list[ChannelThermalModel]:
    """Per-channel copies with g_skin varied uniformly by +/-spread.

    Models unit-to-unit contact variation across the palm; seeded so a
    given virtual participant is reproducible.
    """
    if not 0 <= spread < 1:
        raise ValueError("spread must be in [0, 1)")
    rng = np.random.default_rng(seed)
    factors = rng.uniform(1.0 - spread, 1.0 + spread, n)
    return [replace(model, g_skin=model.g_skin * float(f)) for f in factors]


@dataclass
class ArrayPlant:
    """Full-array plant: nine channel models plus shared module/loop params."""

    channels: list[ChannelThermalModel]
    tem: TemParams = field(default_factory=TemParams)
    coolant: CoolantParams = field(default_factory=CoolantParams)
    loop_water_mass: float = 0.02   # kg of water resident in the cold plates

    def __post_init__(self) -> None:
        if len(self.channels) != self.tem.n_modules:
            raise ValueError(
                f"{len(self.channels)} channel models for "
                f"{self.tem.n_modules} modules")
        if self.loop_water_mass <= 0:
            raise ValueError("loop_water_mass must be positive")
        first = self.channels[0]
        for ch in self.channels[1:]:
            if (ch.skin_core_temp != first.skin_core_temp
                    or ch.sensor_lag_tau != first.sensor_lag_tau
                    or ch.sensor_noise_sigma != first.sensor_noise_sigma):
                raise ValueError(
                    "skin_core_temp, sensor_lag_tau and sensor_noise_sigma "
                    "must be uniform across channels")

    @property
    def n(self) -> int:
        return len(self.channels)

    def flat(self) -> dict:
        """Flat float/array view consumed by the integration kernels."""
        ch = self.channels
        return {
            "c_cold": np.array([c.heat_capacity for c in ch]),
            "g_skin": np.array([c.g_skin for c in ch]),
            "g_sink": np.array([c.g_sink for c in ch]),
            "alpha": self.tem.seebeck_alpha,
            "r_th": self.tem.r_thermal,
            "r_el": self.tem.r_electrical,
            "t_skin": ch[0].skin_core_temp,
            "c_cool": self.loop_water_mass * self.coolant.specific_heat,
            "w_flow": (self.coolant.density * self.coolant.flow_rate
                       * self.coolant.specific_heat),
            "t_res": self.coolant.reservoir_temp,
        }

    def lag_coef(self, dt: float) -> float:
        tau = self.channels[0].sensor_lag_tau
        if tau == 0:
            return 1.0
        return 1.0 - math.exp(-dt / tau)


@dataclass
class PlantState:
    """Instantaneous plant state; `plant_step` is a pure transition on it."""

    t_cold: np.ndarray    # C, (n,)
    t_hot: np.ndarray     # C, (n,) quasi-static hot faces
    t_coolant: float      # C, shared bus
    t_sensor: np.ndarray  # C, (n,) lagged readings

    def copy(self) -> "PlantState":
        return PlantState(self.t_cold.copy(), self.t_hot.copy(),
                          self.t_coolant, self.t_sensor.copy())


def initial_state(plant: ArrayPlant, ambient_c: float = 30.0) -> PlantState:
    n = plant.n
    return PlantState(
        t_cold=np.full(n, float(ambient_c)),
        t_hot=np.full(n, float(ambient_c)),
        t_coolant=float(ambient_c),
        t_sensor=np.full(n, float(ambient_c)),
    )


def hot_face_temps(t_cold: np.ndarray, t_coolant: float, i_eq: np.ndarray,
                   p: dict) -> np.ndarray:
    """Quasi-static hot-face solution of q_hot = g_sink*(t_hot - t_coolant).

    i_eq uses the module sign convention (positive pumps heat cold->hot).
    """
    t_ck = t_cold + KELVIN_OFFSET
    joule = 0.5 * p["r_el"] * i_eq * i_eq
    num = (p["alpha"] * t_ck * i_eq + t_cold / p["r_th"] + joule
           + p["g_sink"] * t_coolant)
    return num / (p["g_sink"] + 1.0 / p["r_th"])


def thermal_rates(t_cold: np.ndarray, t_coolant: float, drive: np.ndarray,
                  p: dict) -> tuple[np.ndarray, float, np.ndarray]:
    """Time derivatives of the plate lumps and the water bus.

    `drive` is the command current, positive = warming; the module
    equations use the opposite convention (positive = cooling), hence the
    negation.
    """
    i_eq = -drive
    t_hot = hot_face_temps(t_cold, t_coolant, i_eq, p)
    t_ck = t_cold + KELVIN_OFFSET
    joule = 0.5 * p["r_el"] * i_eq * i_eq
    q_cold = (-p["alpha"] * t_ck * i_eq
              + (t_hot - t_cold) / p["r_th"]
              + joule)
    d_cold = (q_cold + p["g_skin"] * (p["t_skin"] - t_cold)) / p["c_cold"]
    q_bus = p["g_sink"] * (t_hot - t_coolant)
    d_cool = (float(q_bus.sum())
              + p["w_flow"] * (p["t_res"] - t_coolant)) / p["c_cool"]
    return d_cold, d_cool, t_hot


def _rk4_advance(t_cold: np.ndarray, t_coolant: float, drive: np.ndarray,
                 p: dict, h: float) -> tuple[np.ndarray, float]:
    k1c, k1w, _ = thermal_rates(t_cold, t_coolant, drive, p)
    k2c, k2w, _ = thermal_rates(t_cold + 0.5 * h * k1c,
                                t_coolant + 0.5 * h * k1w, drive, p)
    k3c, k3w, _ = thermal_rates(t_cold + 0.5 * h * k2c,
                                t_coolant + 0.5 * h * k2w, drive, p)
    k4c, k4w, _ = thermal_rates(t_cold + h * k3c, t_coolant + h * k3w, drive, p)
    new_cold = t_cold + (h / 6.0) * (k1c + 2.0 * k2c + 2.0 * k3c + k4c)
    new_cool = t_coolant + (h / 6.0) * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
    return new_cold, new_cool


def _check_state(t_cold: np.ndarray, t_coolant: float) -> None:
    if not (np.isfinite(t_cold).all() and math.isfinite(t_coolant)):
        raise SimulationDiverged("non-finite plant temperature")
    if (t_cold.min() < SIM_T_MIN or t_cold.max() > SIM_T_MAX
            or not SIM_T_MIN <= t_coolant <= SIM_T_MAX):
        raise SimulationDiverged(
            f"plant temperature outside [{SIM_T_MIN}, {SIM_T_MAX}] C")


def plant_step(state: PlantState, currents: np.ndarray, plant: ArrayPlant,
               dt: float) -> PlantState:
    """Advance the plant by dt under constant drive currents (pure).

    The sensor lag is advanced toward the plate temperature at the start
    of the interval (the value a controller sampling now would see), then
    the thermal state integrates in 1 ms RK4 substeps.
    """
    if not 0 < dt <= 0.0101:
        raise ValueError(f"dt must be in (0, 0.01] s, got {dt}")
    drive = np.asarray(currents, dtype=float)
    if drive.shape != (plant.n,):
        raise ValueError(f"expected {plant.n} currents, got shape {drive.shape}")
    if np.abs(drive).max() > plant.tem.i_max + 1e-12:
        raise CurrentLimitError(
            f"|current| {np.abs(drive).max():.3f} A exceeds rating "
            f"{plant.tem.i_max} A")
    p = plant.flat()
    coef = plant.lag_coef(dt)
    n_sub = max(1, int(round(dt / SUBSTEP_S)))

    if _fast is not None and plant.n <= 16:
        t_cold = np.empty(plant.n)
        t_hot = np.empty(plant.n)
        t_sensor = np.empty(plant.n)
        t_cool, bad = _fast.plant_substeps(
            np.ascontiguousarray(state.t_cold), state.t_coolant,
            np.ascontiguousarray(state.t_sensor),
            np.ascontiguousarray(drive),
            p["c_cold"], p["g_skin"], p["g_sink"],
            p["alpha"], p["r_th"], p["r_el"], p["t_skin"],
            p["c_cool"], p["w_flow"], p["t_res"],
            coef, dt, n_sub,
            t_cold, t_hot, t_sensor)
        if bad:
            raise SimulationDiverged(
                f"plant temperature outside [{SIM_T_MIN}, {SIM_T_MAX}] C")
        return PlantState(t_cold=t_cold, t_hot=t_hot, t_coolant=t_cool,
                          t_sensor=t_sensor)

    if coef == 1.0:
        t_sensor = state.t_cold.copy()
    else:
        t_sensor = state.t_sensor + coef * (state.t_cold - state.t_sensor)
    h = dt / n_sub
    t_cold, t_cool = state.t_cold, state.t_coolant
    for _ in range(n_sub):
        t_cold, t_cool = _rk4_advance(t_cold, t_cool, drive, p, h)
    _check_state(t_cold, t_cool)
    t_hot = hot_face_temps(t_cold, t_cool, -drive, p)
    return PlantState(t_cold=t_cold, t_hot=t_hot, t_coolant=t_cool,
                      t_sensor=t_sensor)


def sensor_read(state: PlantState, plant: ArrayPlant, k: int,
                rng: np.random.Generator | None = None) -> float:
    """Lagged reading for channel k plus seeded Gaussian noise (C)."""
    if not 0 <= k < plant.n:
        raise ValueError(f"channel index {k} out of range")
    reading = float(state.t_sensor[k])
    sigma = plant.channels[k].sensor_noise_sigma
    if rng is not None and sigma > 0:
        reading += sigma * float(rng.standard_normal())
    return reading


@dataclass
class TimedTemperatureProfile:
    """Piecewise-linear surface temperatures imposed on the outward sensors.

    `temps_c` is either (n_times,) applied to every listed cell or
    (n_times, n_cells) giving each listed cell its own track.  Cells not
    listed read ambient.
    """

    times_s: np.ndarray
    temps_c: np.ndarray
    cells: tuple[int, ...] = tuple(range(N_CELLS))

    def __post_init__(self) -> None:
        self.times_s = np.asarray(self.times_s, dtype=float)
        self.temps_c = np.asarray(self.temps_c, dtype=float)
        self.cells = tuple(int(c) for c in self.cells)
        if self.times_s.ndim != 1 or self.times_s.size < 2:
            raise ValueError("need at least two time points")
        if np.any(np.diff(self.times_s) <= 0):
            raise ValueError("times_s must be strictly increasing")
        if any(not 0 <= c < N_CELLS for c in self.cells):
            raise ValueError("cell indices must be in [0, 8]")
        if len(set(self.cells)) != len(self.cells):
            raise ValueError("duplicate cell indices")
        if self.temps_c.ndim == 1:
            if self.temps_c.size != self.times_s.size:
                raise ValueError("temps_c length must match times_s")
        elif self.temps_c.ndim == 2:
            if self.temps_c.shape != (self.times_s.size, len(self.cells)):
                raise ValueError(
                    "temps_c must be (n_times, n_cells) for per-cell tracks")
        else:
            raise ValueError("temps_c must be 1-D or 2-D")

    def sample(self, t: float, ambient_c: float = 30.0) -> np.ndarray:
        if not self.times_s[0] <= t <= self.times_s[-1]:
            raise ProfileDomainError(
                f"t={t} s outside profile domain "
                f"[{self.times_s[0]}, {self.times_s[-1]}]")
        out = np.full(N_CELLS, float(ambient_c))
        if self.temps_c.ndim == 1:
            v = float(np.interp(t, self.times_s, self.temps_c))
            for c in self.cells:
                out[c] = v
        else:
            for j, c in enumerate(self.cells):
                out[c] = float(np.interp(t, self.times_s, self.temps_c[:, j]))
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "TimedTemperatureProfile":
        allowed = {"schema", "cells", "times_s", "temps_c"}
        unknown = set(obj) - allowed
        if unknown:
            raise ValueError(f"unknown profile fields: {sorted(unknown)}")
        if obj.get("schema") != 1:
            raise ValueError(f"unsupported profile schema: {obj.get('schema')!r}")
        missing = {"times_s", "temps_c"} - set(obj)
        if missing:
            raise ValueError(f"missing profile fields: {sorted(missing)}")
        cells = obj.get("cells", "all")
        if cells == "all":
            cells = tuple(range(N_CELLS))
        return cls(times_s=np.asarray(obj["times_s"], dtype=float),
                   temps_c=np.asarray(obj["temps_c"], dtype=float),
                   cells=tuple(cells))

    def to_json(self) -> dict:
        return {"schema": 1, "cells": list(self.cells),
                "times_s": self.times_s.tolist(),
                "temps_c": self.temps_c.tolist()}


def external_surface_source(profile: TimedTemperatureProfile, t: float,
                            ambient_c: float = 30.0) -> np.ndarray:
    """Outward-facing sensor temperatures a contacted surface imposes at t."""
    return profile.sample(t, ambient_c)
