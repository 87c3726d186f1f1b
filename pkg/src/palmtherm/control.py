"""Per-channel temperature control.

Nine independent discrete PID loops share one set of gains.  The loops
run at the control tick (100 Hz by default) on sensor readings; the
derivative term acts on the measurement so setpoint jumps do not kick
the output; the integrator freezes while the output is clamped
(conditional-integration anti-windup).

The drive stage is modeled as an ideal current source: the physical
driver applies a differential 5 kHz-filtered DC current (PWM ripple on a
purely resistive load would dissipate extra Joule heat without pumping),
so command-in equals current-out up to the clamp.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class MetricsError(ValueError):
    """Raised when a trace does not contain a measurable step response."""


@dataclass
class PidGains:
    """Shared gains for all channels.  Units: A/K, A/(K s), A s/K."""

    kp: float
    ki: float
    kd: float
    output_limit_a: float = 0.7
    integral_limit_a: float = 0.7

    def __post_init__(self) -> None:
        if self.kp < 0 or self.ki < 0 or self.kd < 0:
            raise ValueError("gains must be non-negative")
        if not 0 < self.output_limit_a <= 2.0:
            raise ValueError(f"output_limit_a out of range: {self.output_limit_a}")
        if not 0 < self.integral_limit_a <= 2.0:
            raise ValueError(
                f"integral_limit_a out of range: {self.integral_limit_a}")


@dataclass
class ControllerState:
    """Persistent per-channel controller memory between ticks."""

    integral: float = 0.0
    prev_measured: float | None = None  # None -> no derivative on first tick


def pid_step(gains: PidGains, state: ControllerState, setpoint: float,
             measured: float, dt: float) -> tuple[float, ControllerState, bool]:
    """One positional-PID update; returns (current_a, new_state, saturated).

    Positive output drives warming.  The integral candidate is clamped to
    +/-integral_limit_a; if the summed output then exceeds
    +/-output_limit_a the output is clamped and the integral reverts to
    its previous value, so windup cannot accumulate while saturated.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    prev = measured if state.prev_measured is None else state.prev_measured
    error = setpoint - measured
    deriv = -gains.kd * (measured - prev) / dt
    integral = state.integral + gains.ki * error * dt
    if integral > gains.integral_limit_a:
        integral = gains.integral_limit_a
    elif integral < -gains.integral_limit_a:
        integral = -gains.integral_limit_a
    out = gains.kp * error + integral + deriv
    saturated = False
    if out > gains.output_limit_a:
        out = gains.output_limit_a
        integral = state.integral
        saturated = True
    elif out < -gains.output_limit_a:
        out = -gains.output_limit_a
        integral = state.integral
        saturated = True
    return out, ControllerState(integral=integral, prev_measured=measured), saturated


def drive_model(command_a: float, i_max: float = 0.7) -> float:
    """Commanded current to delivered module current (ideal pass-through).

    The clamp is a guard only; upstream PID limits already keep commands
    within the module rating.
    """
    if command_a > i_max:
        return i_max
    if command_a < -i_max:
        return -i_max
    return command_a


@dataclass
class StepMetrics:
    baseline_c: float
    final_c: float
    step_c: float
    t10_s: float
    t90_s: float
    rise_time_s: float
    overshoot_pct: float
    settling_time_s: float


def _first_crossing(times: np.ndarray, u: np.ndarray, level: float) -> float:
    """Time of first crossing of normalized level, linearly interpolated."""
    above = u >= level
    if not above.any():
        raise MetricsError(f"trace never reaches {level:.0%} of the step")
    j = int(np.argmax(above))
    if j == 0:
        return float(times[0])
    t0, t1 = times[j - 1], times[j]
    u0, u1 = u[j - 1], u[j]
    if u1 == u0:
        return float(t1)
    return float(t0 + (level - u0) * (t1 - t0) / (u1 - u0))


def step_response_metrics(times, values, settle_band: float = 0.02,
                          min_step_c: float = 1e-6) -> StepMetrics:
    """10-90 % rise time, overshoot and settling time of a step trace.

    The trace must start at the instant the step is commanded (first
    sample is the baseline).  Final value is the mean of the last 5 % of
    samples; settling time is when the trace last leaves the
    +/-settle_band * |step| band around it.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.ndim != 1 or t.shape != y.shape or t.size < 10:
        raise MetricsError("need matching 1-D arrays with at least 10 samples")
    if np.any(np.diff(t) <= 0):
        raise MetricsError("times must be strictly increasing")
    baseline = float(y[0])
    tail = y[int(0.95 * y.size):]
    final = float(tail.mean())
    step = final - baseline
    if abs(step) < min_step_c:
        raise MetricsError("no step detected (flat trace)")
    u = (y - baseline) / step
    t10 = _first_crossing(t, u, 0.1)
    t90 = _first_crossing(t, u, 0.9)
    overshoot = max(0.0, (float(u.max()) - 1.0) * 100.0)
    outside = np.abs(y - final) > settle_band * abs(step)
    if outside[-1]:
        raise MetricsError("trace has not settled by its last sample")
    last_out = int(np.nonzero(outside)[0][-1]) if outside.any() else -1
    settling = float(t[last_out + 1])
    return StepMetrics(baseline_c=baseline, final_c=final, step_c=step,
                       t10_s=t10, t90_s=t90, rise_time_s=t90 - t10,
                       overshoot_pct=overshoot, settling_time_s=settling)
