# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled closed-loop kernel.

Same calling convention and arithmetic as the pure-Python reference in
``_ref``; this version flattens the RK4 stages and the PID update into C
loops.  Keep the expression shapes in step with ``_ref`` when editing:
the backend-equivalence tests hold both to within 1e-9 C.
"""

from libc.math cimport isfinite, isnan

DEF MAXCH = 16

cdef double SIM_T_MIN = 0.0
cdef double SIM_T_MAX = 80.0
cdef double KELVIN = 273.15


cdef inline void _rates(double* t_cold, double t_cool, double* drive, int n,
                        double* c_cold, double* g_skin, double* g_sink,
                        double alpha, double r_th, double r_el,
                        double t_skin, double c_cool, double w_flow,
                        double t_res,
                        double* d_cold, double* d_cool) noexcept nogil:
    cdef int k
    cdef double ieq, tck, joule, th, q_cold, bus
    bus = 0.0
    for k in range(n):
        ieq = -drive[k]
        tck = t_cold[k] + KELVIN
        joule = 0.5 * r_el * ieq * ieq
        th = (alpha * tck * ieq + t_cold[k] / r_th + joule
              + g_sink[k] * t_cool) / (g_sink[k] + 1.0 / r_th)
        q_cold = -alpha * tck * ieq + (th - t_cold[k]) / r_th + joule
        d_cold[k] = (q_cold + g_skin[k] * (t_skin - t_cold[k])) / c_cold[k]
        bus += g_sink[k] * (th - t_cool)
    d_cool[0] = (bus + w_flow * (t_res - t_cool)) / c_cool


def run_closed_loop(double[:, ::1] setpoints, double[:, ::1] noise,
                    double[::1] c_cold, double[::1] g_skin,
                    double[::1] g_sink,
                    double alpha, double r_th, double r_el, double t_skin,
                    double c_cool, double w_flow, double t_res,
                    double lag_coef, double kp, double ki, double kd,
                    double out_limit, double int_limit,
                    double dt, int n_sub,
                    double[::1] t_cold, double[::1] t_cool_arr,
                    double[::1] t_sens, double[::1] integ,
                    double[::1] prev_meas,
                    double[:, ::1] out_t_cold, double[:, ::1] out_t_hot,
                    double[:, ::1] out_meas, double[:, ::1] out_curr,
                    double[::1] out_t_cool, unsigned char[:, ::1] out_sat):
    cdef int n_ticks = setpoints.shape[0]
    cdef int n = setpoints.shape[1]
    if n > MAXCH:
        raise ValueError("kernel supports at most 16 channels")
    if n_sub < 1:
        raise ValueError("n_sub must be >= 1")
    cdef double h = dt / n_sub
    cdef double[MAXCH] yc, k1, k2, k3, k4, ytmp, drive
    cdef double yw, k1w, k2w, k3w, k4w, ywtmp
    cdef double m, prev, e, deriv, ii, u, tck, ieq, joule
    cdef int t, k, s, sat, bad
    cdef double half_h = 0.5 * h

    for k in range(n):
        yc[k] = t_cold[k]
    yw = t_cool_arr[0]

    for t in range(n_ticks):
        # sensor lag toward start-of-tick plate temperature
        if lag_coef == 1.0:
            for k in range(n):
                t_sens[k] = yc[k]
        else:
            for k in range(n):
                t_sens[k] = t_sens[k] + lag_coef * (yc[k] - t_sens[k])
        # PID per channel (derivative on measurement, clamped integral,
        # conditional integration while saturated) - mirrors pid_step()
        for k in range(n):
            m = t_sens[k] + noise[t, k]
            prev = prev_meas[k]
            if isnan(prev):
                prev = m
            e = setpoints[t, k] - m
            deriv = -kd * (m - prev) / dt
            ii = integ[k] + ki * e * dt
            if ii > int_limit:
                ii = int_limit
            elif ii < -int_limit:
                ii = -int_limit
            u = kp * e + ii + deriv
            sat = 0
            if u > out_limit:
                u = out_limit
                ii = integ[k]
                sat = 1
            elif u < -out_limit:
                u = -out_limit
                ii = integ[k]
                sat = 1
            integ[k] = ii
            prev_meas[k] = m
            drive[k] = u
            out_meas[t, k] = m
            out_curr[t, k] = u
            out_sat[t, k] = <unsigned char>sat
        # RK4 substeps under zero-order-hold drive
        for s in range(n_sub):
            _rates(&yc[0], yw, &drive[0], n, &c_cold[0], &g_skin[0],
                   &g_sink[0], alpha, r_th, r_el, t_skin, c_cool, w_flow,
                   t_res, &k1[0], &k1w)
            for k in range(n):
                ytmp[k] = yc[k] + half_h * k1[k]
            ywtmp = yw + half_h * k1w
            _rates(&ytmp[0], ywtmp, &drive[0], n, &c_cold[0], &g_skin[0],
                   &g_sink[0], alpha, r_th, r_el, t_skin, c_cool, w_flow,
                   t_res, &k2[0], &k2w)
            for k in range(n):
                ytmp[k] = yc[k] + half_h * k2[k]
            ywtmp = yw + half_h * k2w
            _rates(&ytmp[0], ywtmp, &drive[0], n, &c_cold[0], &g_skin[0],
                   &g_sink[0], alpha, r_th, r_el, t_skin, c_cool, w_flow,
                   t_res, &k3[0], &k3w)
            for k in range(n):
                ytmp[k] = yc[k] + h * k3[k]
            ywtmp = yw + h * k3w
            _rates(&ytmp[0], ywtmp, &drive[0], n, &c_cold[0], &g_skin[0],
                   &g_sink[0], alpha, r_th, r_el, t_skin, c_cool, w_flow,
                   t_res, &k4[0], &k4w)
            for k in range(n):
                yc[k] = yc[k] + (h / 6.0) * (k1[k] + 2.0 * k2[k]
                                             + 2.0 * k3[k] + k4[k])
            yw = yw + (h / 6.0) * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
        # divergence guard and telemetry
        bad = 0
        for k in range(n):
            if not isfinite(yc[k]) or yc[k] < SIM_T_MIN or yc[k] > SIM_T_MAX:
                bad = 1
        if not isfinite(yw) or yw < SIM_T_MIN or yw > SIM_T_MAX:
            bad = 1
        for k in range(n):
            t_cold[k] = yc[k]
        t_cool_arr[0] = yw
        if bad:
            return t + 1
        for k in range(n):
            out_t_cold[t, k] = yc[k]
            ieq = -drive[k]
            tck = yc[k] + KELVIN
            joule = 0.5 * r_el * ieq * ieq
            out_t_hot[t, k] = (alpha * tck * ieq + yc[k] / r_th + joule
                               + g_sink[k] * yw) / (g_sink[k] + 1.0 / r_th)
        out_t_cool[t] = yw
    return 0


def plant_substeps(double[::1] t_cold, double t_coolant,
                   double[::1] t_sensor, double[::1] drive,
                   double[::1] c_cold, double[::1] g_skin,
                   double[::1] g_sink,
                   double alpha, double r_th, double r_el, double t_skin,
                   double c_cool, double w_flow, double t_res,
                   double lag_coef, double dt, int n_sub,
                   double[::1] out_t_cold, double[::1] out_t_hot,
                   double[::1] out_t_sensor):
    """One control interval of the plant alone (no PID): sensor lag,
    n_sub RK4 substeps under zero-order-hold drive, hot-face recovery.

    Returns (new_t_coolant, bad) where bad=1 flags a state outside the
    simulation's temperature box; the caller raises.  Arithmetic is the
    same _rates() the batch kernel uses, so the single-step and batch
    paths cannot drift apart.
    """
    cdef int n = t_cold.shape[0]
    if n > MAXCH:
        raise ValueError("kernel supports at most 16 channels")
    if n_sub < 1:
        raise ValueError("n_sub must be >= 1")
    cdef double h = dt / n_sub
    cdef double half_h = 0.5 * h
    cdef double[MAXCH] yc, k1, k2, k3, k4, ytmp
    cdef double yw, k1w, k2w, k3w, k4w, ywtmp
    cdef double ieq, tck, joule
    cdef int k, s, bad

    for k in range(n):
        yc[k] = t_cold[k]
        if lag_coef == 1.0:
            out_t_sensor[k] = t_cold[k]
        else:
            out_t_sensor[k] = t_sensor[k] + lag_coef * (t_cold[k] - t_sensor[k])
    yw = t_coolant

    for s in range(n_sub):
        _rates(&yc[0], yw, &drive[0], n, &c_cold[0], &g_skin[0],
               &g_sink[0], alpha, r_th, r_el, t_skin, c_cool, w_flow,
               t_res, &k1[0], &k1w)
        for k in range(n):
            ytmp[k] = yc[k] + half_h * k1[k]
        ywtmp = yw + half_h * k1w
        _rates(&ytmp[0], ywtmp, &drive[0], n, &c_cold[0], &g_skin[0],
               &g_sink[0], alpha, r_th, r_el, t_skin, c_cool, w_flow,
               t_res, &k2[0], &k2w)
        for k in range(n):
            ytmp[k] = yc[k] + half_h * k2[k]
        ywtmp = yw + half_h * k2w
        _rates(&ytmp[0], ywtmp, &drive[0], n, &c_cold[0], &g_skin[0],
               &g_sink[0], alpha, r_th, r_el, t_skin, c_cool, w_flow,
               t_res, &k3[0], &k3w)
        for k in range(n):
            ytmp[k] = yc[k] + h * k3[k]
        ywtmp = yw + h * k3w
        _rates(&ytmp[0], ywtmp, &drive[0], n, &c_cold[0], &g_skin[0],
               &g_sink[0], alpha, r_th, r_el, t_skin, c_cool, w_flow,
               t_res, &k4[0], &k4w)
        for k in range(n):
            yc[k] = yc[k] + (h / 6.0) * (k1[k] + 2.0 * k2[k]
                                         + 2.0 * k3[k] + k4[k])
        yw = yw + (h / 6.0) * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)

    bad = 0
    for k in range(n):
        if not isfinite(yc[k]) or yc[k] < SIM_T_MIN or yc[k] > SIM_T_MAX:
            bad = 1
    if not isfinite(yw) or yw < SIM_T_MIN or yw > SIM_T_MAX:
        bad = 1
    if bad:
        return yw, 1

    for k in range(n):
        out_t_cold[k] = yc[k]
        ieq = -drive[k]
        tck = yc[k] + KELVIN
        joule = 0.5 * r_el * ieq * ieq
        out_t_hot[k] = (alpha * tck * ieq + yc[k] / r_th + joule
                        + g_sink[k] * yw) / (g_sink[k] + 1.0 / r_th)
    return yw, 0
