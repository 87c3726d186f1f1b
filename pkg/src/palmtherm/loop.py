"""High-level closed-loop simulation driver.

Wraps the integration kernel: builds the setpoint/noise arrays,
allocates trajectories, runs sense -> PID -> plant for every control
tick and returns the full traces.  Used by calibration, the step
characterization CLI and most simulation tests; the live device layer
calls the kernel tick-by-tick instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from palmtherm._kernel import run_closed_loop
from palmtherm.control import PidGains
from palmtherm.plant import (
    ArrayPlant,
    PlantState,
    SimulationDiverged,
    hot_face_temps,
    initial_state,
)

DEFAULT_TICK_HZ = 100.0


@dataclass
class SimResult:
    """End-of-tick trajectories of one closed-loop run."""

    times: np.ndarray        # (n_ticks,) s, end of each tick
    setpoints: np.ndarray    # (n_ticks, n) C
    t_cold: np.ndarray       # (n_ticks, n) C, plate temperatures
    t_hot: np.ndarray        # (n_ticks, n) C
    measured: np.ndarray     # (n_ticks, n) C, what the PID saw
    currents: np.ndarray     # (n_ticks, n) A, positive = warming
    t_coolant: np.ndarray    # (n_ticks,) C
    saturated: np.ndarray    # (n_ticks, n) uint8
    state: PlantState        # final plant state
    integ: np.ndarray        # final integrator values
    prev_meas: np.ndarray    # final previous-measurement memory


def expand_setpoints(setpoints, n_ticks: int, n: int) -> np.ndarray:
    """Scalar, per-channel vector, or full (n_ticks, n) schedule -> array."""
    sp = np.asarray(setpoints, dtype=float)
    if sp.ndim == 0:
        return np.full((n_ticks, n), float(sp))
    if sp.ndim == 1:
        if sp.shape[0] != n:
            raise ValueError(f"setpoint vector must have length {n}")
        return np.tile(sp, (n_ticks, 1))
    if sp.shape != (n_ticks, n):
        raise ValueError(f"setpoint schedule must be ({n_ticks}, {n})")
    return np.ascontiguousarray(sp)


def simulate_closed_loop(plant: ArrayPlant, gains: PidGains, setpoints,
                         duration_s: float, tick_hz: float = DEFAULT_TICK_HZ,
                         substeps: int | None = None,
                         state: PlantState | None = None,
                         noise_seed: int | None = None,
                         integ: np.ndarray | None = None,
                         prev_meas: np.ndarray | None = None) -> SimResult:
    """Simulate the PID-controlled array for duration_s seconds.

    With noise_seed None the sensors are noise-free (deterministic
    characterization runs); otherwise Gaussian sensor noise is drawn once
    up front from the seeded generator.
    """
    if duration_s <= 0 or tick_hz <= 0:
        raise ValueError("duration_s and tick_hz must be positive")
    n = plant.n
    dt = 1.0 / tick_hz
    n_ticks = int(round(duration_s * tick_hz))
    if n_ticks < 1:
        raise ValueError("duration shorter than one tick")
    if substeps is None:
        substeps = max(1, int(round(dt / 1e-3)))
    sp = expand_setpoints(setpoints, n_ticks, n)
    sigma = plant.channels[0].sensor_noise_sigma
    if noise_seed is None or sigma == 0:
        noise = np.zeros((n_ticks, n))
    else:
        rng = np.random.default_rng(noise_seed)
        noise = sigma * rng.standard_normal((n_ticks, n))
    st = (state or initial_state(plant)).copy()
    t_cool_arr = np.array([st.t_coolant])
    integ = np.zeros(n) if integ is None else integ.astype(float).copy()
    prev_meas = (np.full(n, np.nan) if prev_meas is None
                 else prev_meas.astype(float).copy())
    p = plant.flat()

    out_t_cold = np.empty((n_ticks, n))
    out_t_hot = np.empty((n_ticks, n))
    out_meas = np.empty((n_ticks, n))
    out_curr = np.empty((n_ticks, n))
    out_t_cool = np.empty(n_ticks)
    out_sat = np.zeros((n_ticks, n), dtype=np.uint8)

    rc = run_closed_loop(
        sp, noise, p["c_cold"], p["g_skin"], p["g_sink"],
        p["alpha"], p["r_th"], p["r_el"], p["t_skin"],
        p["c_cool"], p["w_flow"], p["t_res"],
        plant.lag_coef(dt), gains.kp, gains.ki, gains.kd,
        gains.output_limit_a, gains.integral_limit_a, dt, substeps,
        st.t_cold, t_cool_arr, st.t_sensor, integ, prev_meas,
        out_t_cold, out_t_hot, out_meas, out_curr, out_t_cool, out_sat)
    if rc != 0:
        raise SimulationDiverged(
            f"plant diverged at tick {rc - 1} (t={(rc - 1) * dt:.3f} s)",
            tick=rc - 1)

    final = PlantState(
        t_cold=st.t_cold.copy(),
        t_hot=hot_face_temps(st.t_cold, float(t_cool_arr[0]),
                             -out_curr[-1], p),
        t_coolant=float(t_cool_arr[0]),
        t_sensor=st.t_sensor.copy())
    times = (np.arange(n_ticks) + 1) * dt
    return SimResult(times=times, setpoints=sp, t_cold=out_t_cold,
                     t_hot=out_t_hot, measured=out_meas, currents=out_curr,
                     t_coolant=out_t_cool, saturated=out_sat, state=final,
                     integ=integ, prev_meas=prev_meas)


def step_schedule(n_ticks: int, n: int, before_c: float, after_c: float,
                  step_tick: int) -> np.ndarray:
    """Uniform step on all channels at a given tick."""
    sp = np.full((n_ticks, n), float(before_c))
    sp[step_tick:, :] = float(after_c)
    return sp
