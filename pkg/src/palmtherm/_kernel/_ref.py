"""Pure-Python closed-loop kernel.

Reference implementation built from the public pieces (`thermal_rates`
RK4 advance and `pid_step`), used when the compiled extension is absent
and as the independent route the compiled kernel is verified against.
Slow but exact: roughly two orders of magnitude behind the Cython
version on long runs.
"""

from __future__ import annotations

import math

import numpy as np

from palmtherm.control import ControllerState, PidGains, pid_step
from palmtherm.plant import SIM_T_MAX, SIM_T_MIN, _rk4_advance, hot_face_temps


def run_closed_loop(setpoints, noise, c_cold, g_skin, g_sink,
                    alpha, r_th, r_el, t_skin, c_cool, w_flow, t_res,
                    lag_coef, kp, ki, kd, out_limit, int_limit,
                    dt, n_sub,
                    t_cold, t_cool_arr, t_sens, integ, prev_meas,
                    out_t_cold, out_t_hot, out_meas, out_curr,
                    out_t_cool, out_sat) -> int:
    """Run n_ticks of sense -> PID -> RK4 advance; see _kernel docs.

    State arrays (t_cold, t_cool_arr, t_sens, integ, prev_meas) are
    updated in place to the final state.  Returns 0 on success or
    1-based tick index of the first divergence.
    """
    n_ticks, n = setpoints.shape
    p = {
        "c_cold": np.asarray(c_cold), "g_skin": np.asarray(g_skin),
        "g_sink": np.asarray(g_sink), "alpha": alpha, "r_th": r_th,
        "r_el": r_el, "t_skin": t_skin, "c_cool": c_cool,
        "w_flow": w_flow, "t_res": t_res,
    }
    gains = PidGains(kp=kp, ki=ki, kd=kd, output_limit_a=out_limit,
                     integral_limit_a=int_limit)
    h = dt / n_sub
    drive = np.empty(n)
    for t in range(n_ticks):
        if lag_coef == 1.0:
            t_sens[:] = t_cold
        else:
            t_sens += lag_coef * (t_cold - t_sens)
        for k in range(n):
            m = t_sens[k] + noise[t, k]
            prev = None if math.isnan(prev_meas[k]) else prev_meas[k]
            st = ControllerState(integral=integ[k], prev_measured=prev)
            u, st, sat = pid_step(gains, st, setpoints[t, k], m, dt)
            integ[k] = st.integral
            prev_meas[k] = st.prev_measured
            drive[k] = u
            out_meas[t, k] = m
            out_curr[t, k] = u
            out_sat[t, k] = 1 if sat else 0
        cold = t_cold.copy()
        cool = float(t_cool_arr[0])
        for _ in range(n_sub):
            cold, cool = _rk4_advance(cold, cool, drive, p, h)
        t_cold[:] = cold
        t_cool_arr[0] = cool
        ok = (np.isfinite(cold).all() and math.isfinite(cool)
              and SIM_T_MIN <= cold.min() and cold.max() <= SIM_T_MAX
              and SIM_T_MIN <= cool <= SIM_T_MAX)
        if not ok:
            return t + 1
        out_t_cold[t, :] = cold
        out_t_hot[t, :] = hot_face_temps(cold, cool, -drive, p)
        out_t_cool[t] = cool
    return 0
