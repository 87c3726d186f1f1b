"""Acceptance gate: one test per shipping criterion, one verdict line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the verdict
lines on success; on failure the line is in the assertion message.
Oracles here are computed inline and independently of the library code
under test (tail summations, sign enumerations, exact rationals).
"""

import itertools
import math
import random
import statistics
import subprocess
import sys
import time
from fractions import Fraction

import numpy as np

from palmtherm.calibrate import load_default_calibration, measure_rise_times
from palmtherm.device import DeviceConfig, device_from_record
from palmtherm.framing import (FRAME_SIZE, FrameError, SerialFrame,
                               serial_frame_decode, serial_frame_encode)
from palmtherm.loop import (DEFAULT_TICK_HZ, simulate_closed_loop,
                            step_schedule)
from palmtherm.patterns import pattern_by_name, brush_schedule
from palmtherm.device import ArrayGeometry
from palmtherm.plant import ArrayPlant, uniform_channels
from palmtherm.psychophys import (ObserverModel, StaircaseConfig,
                                  convergence_probability, exp3_pair_table,
                                  exp3_stream, jnd_estimate, run_staircase)
from palmtherm.service import DeviceService, ServiceSettings
from palmtherm.stats import binomial_test, wilcoxon_signed_rank
from palmtherm.tem import (CoolantParams, TemParams, array_heat_budget,
                           cold_side_flow, coolant_delta_t, hot_side_flow)


def _verdict(name: str, ok: bool, detail: str) -> None:
    print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def test_a01_budget_math():
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "palmtherm", "budget"],
                          capture_output=True, text=True)
    elapsed = time.perf_counter() - t0
    q = array_heat_budget(TemParams())
    dt = coolant_delta_t(q, CoolantParams())
    ok = (proc.returncode == 0
          and "24.49" in proc.stdout and "2.60" in proc.stdout
          and abs(q - 24.49) <= 0.005 and abs(dt - 2.60) <= 0.005
          and elapsed < 1.0)
    _verdict("budget-math", ok,
             f"array {q:.4f} W, coolant rise {dt:.4f} K, "
             f"cli {elapsed * 1e3:.0f} ms")


def test_a02_energy_identity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20260815)
    n = 1_000_000
    t_c = rng.uniform(273.15, 353.15, n)
    t_h = rng.uniform(273.15, 353.15, n)
    i = rng.uniform(-0.7, 0.7, n)
    p = TemParams()
    q_c = cold_side_flow(p.seebeck_alpha, t_c, t_h, i,
                         p.r_thermal, p.r_electrical)
    q_h = hot_side_flow(p.seebeck_alpha, t_c, t_h, i,
                        p.r_thermal, p.r_electrical)
    worst = float(np.abs(q_c + q_h - p.r_electrical * i * i).max())
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-9 and elapsed < 10.0
    _verdict("energy-identity", ok,
             f"max |q_c + q_h - i^2 R| = {worst:.3e} W over 1e6 samples "
             f"in {elapsed:.2f} s")


def test_a03_step_response_calibration():
    t0 = time.perf_counter()
    rec = load_default_calibration()
    warm, cool = measure_rise_times(rec.model, rec.gains, rec.tem,
                                    rec.coolant)
    elapsed = time.perf_counter() - t0
    ok = (1.4 * 0.9 <= warm <= 1.4 * 1.1
          and 2.4 * 0.9 <= cool <= 2.4 * 1.1
          and cool > warm and elapsed < 30.0)
    _verdict("step-response-calibration", ok,
             f"warm rise {warm:.3f} s, cool rise {cool:.3f} s "
             f"in {elapsed:.1f} s")


def test_a04_operating_envelope():
    rec = load_default_calibration()
    plant = ArrayPlant(channels=uniform_channels(rec.model),
                       tem=rec.tem, coolant=rec.coolant)
    ambient = 30.0

    # steady state at both envelope edges
    reach = []
    for target in (ambient + 15.0, ambient - 15.0):
        res = simulate_closed_loop(plant, rec.gains, target, 30.0)
        reach.append(float(np.abs(res.t_cold[-1] - target).max()))

    # onset rate for +-10 C steps, every channel
    n = int(6.0 * DEFAULT_TICK_HZ)
    pre = int(1.0 * DEFAULT_TICK_HZ)
    rates = []
    for sign in (+1.0, -1.0):
        sp = step_schedule(n, plant.n, ambient, ambient + sign * 10.0, pre)
        res = simulate_closed_loop(plant, rec.gains, sp, 6.0)
        window = res.t_cold[pre:pre + int(2.0 * DEFAULT_TICK_HZ)]
        rate = np.abs(np.diff(window, axis=0)).max(axis=0) * DEFAULT_TICK_HZ
        rates.append(float(rate.min()))

    ok = max(reach) <= 0.5 and min(rates) > 0.1
    _verdict("operating-envelope", ok,
             f"worst steady-state miss {max(reach):.3f} C at ambient+-15, "
             f"slowest onset {min(rates):.2f} C/s for +-10 C steps")


def test_a05_staircase_correctness():
    theta = 2.5
    cfg = StaircaseConfig(polarity="warm", pattern=pattern_by_name("all"))

    # deterministic-threshold observer: termination and estimate quantum
    quantum = theta * (cfg.up_factor - 1.0)  # one ladder rung at theta
    devs, rev_counts = [], []
    for seed in range(100):
        st, _ = run_staircase(cfg, ObserverModel(theta, slope_sigma=0.0,
                                                 seed=seed))
        rev_counts.append(len(st.reversal_steps))
        devs.append(abs(jnd_estimate(cfg, st) - theta))
    det_ok = all(c == 10 for c in rev_counts) and max(devs) <= quantum

    # stochastic observer: reversal points sit at the equilibrium
    # percentile of the psychometric function
    p_star = convergence_probability(cfg.down_factor, cfg.up_factor)
    sigma = 1.0
    mu = theta - sigma * statistics.NormalDist().inv_cdf(p_star)
    long_cfg = StaircaseConfig(polarity="warm",
                               pattern=pattern_by_name("all"),
                               reversals_to_stop=120,
                               reversals_averaged=100)
    pooled = []
    for seed in range(40):
        m = ObserverModel(threshold_mu=mu, slope_sigma=sigma, seed=seed)
        st, _ = run_staircase(long_cfg, m, max_trials=20000)
        pooled.extend(st.reversal_steps[20:])
    geo = math.exp(sum(map(math.log, pooled)) / len(pooled))
    p_at_geo = ObserverModel(threshold_mu=mu,
                             slope_sigma=sigma).p_different(geo)
    sto_ok = abs(p_at_geo - p_star) <= 0.02

    _verdict("staircase-correctness", det_ok and sto_ok,
             f"100 deterministic runs all 10 reversals, "
             f"max |jnd-theta| {max(devs):.3f} <= rung {quantum:.2f} C; "
             f"p(different) at pooled reversal center {p_at_geo:.4f} "
             f"vs equilibrium {p_star:.4f}")


def test_a06_passthrough_fidelity():
    rec = load_default_calibration()
    rng = np.random.default_rng(99)
    exact = True
    worst = 0.0
    for _ in range(100):
        ext = rng.uniform(15.0, 45.0, 9)
        dev = device_from_record(rec, noise_seed=None)
        dev.set_external(ext)
        dev.set_mode("passthrough")
        frame = dev.device_tick()
        exact &= list(frame.setpoints) == [float(v) for v in ext]
        frame = dev.run_ticks(int(3.0 * DEFAULT_TICK_HZ) - 1)
        exact &= list(frame.setpoints) == [float(v) for v in ext]
        worst = max(worst,
                    float(np.abs(dev.backend.state.t_cold - ext).max()))
    ok = exact and worst <= 0.3
    _verdict("passthrough-fidelity", ok,
             f"setpoints exact on 100 random externals, worst skin-side "
             f"miss {worst:.3f} C after 3 s")


def test_a07_pattern_change_machinery():
    table = exp3_pair_table(seed=7)
    per_pol = {"warm": [], "cool": []}
    for t in table:
        if t.changed:
            per_pol[t.polarity].append((t.first, t.second))
    counts_ok = all(len(v) == 30 and len(set(v)) == 30
                    for v in per_pol.values())

    trial = next(t for t in table if t.changed)
    stream = exp3_stream(trial)
    ticks = stream.tick_table(DEFAULT_TICK_HZ)
    first = pattern_by_name(trial.first, trial.offset_c)
    second = pattern_by_name(trial.second, trial.offset_c)
    seg0 = np.zeros(9)
    seg0[first.mask()] = trial.offset_c
    seg1 = np.zeros(9)
    seg1[second.mask()] = trial.offset_c
    boundary = int(round(3.0 * DEFAULT_TICK_HZ))
    timing_ok = (stream.times_s == (0.0, 3.0)
                 and stream.duration_s == 6.0
                 and ticks.shape[0] == 2 * boundary
                 and np.array_equal(ticks[boundary - 1], seg0)
                 and np.array_equal(ticks[boundary], seg1))
    _verdict("pattern-change-machinery", counts_ok and timing_ok,
             f"30 ordered changed pairs per polarity; 3 s + 3 s boundary "
             f"lands on tick {boundary} exactly")


def test_a08_brush_schedule():
    sched = brush_schedule(ArrayGeometry(), 3.5, offset_c=8.0)
    inter = sched.inter_onset_s
    onsets = [e.time_s for e in sched.events]
    increasing = all(b > a for a, b in zip(onsets, onsets[1:]))
    path_cells = {e.cell for e in sched.events}

    rec = load_default_calibration()
    dev = device_from_record(rec, noise_seed=None)
    stream = sched.to_stream()
    dev.play(stream)
    off_path = sorted(set(range(9)) - path_cells)
    drift = 0.0
    for _ in range(int(math.ceil(stream.duration_s * DEFAULT_TICK_HZ)) + 10):
        dev.device_tick()
        plate = dev.backend.state.t_cold
        drift = max(drift, float(np.abs(plate[off_path] - 30.0).max()))

    ok = (inter == Fraction(9, 1750) and increasing
          and path_cells == {3, 4, 5} and drift <= 0.05)
    _verdict("brush-schedule", ok,
             f"inter-onset {float(inter) * 1e3:.3f} ms == 9/1750 s exact, "
             f"onsets increasing, off-path drift {drift:.4f} C")


def test_a09_statistics_oracles():
    # binomial: independent exact-rational tail summation
    rng = random.Random(4242)
    worst_b = 0.0
    for _ in range(1000):
        n = rng.randint(1, 200)
        k = rng.randint(0, n)
        p0 = rng.uniform(0.05, 0.95)
        pf = Fraction(p0)
        pmf = [Fraction(math.comb(n, j)) * pf**j * (1 - pf) ** (n - j)
               for j in range(n + 1)]
        cutoff = pmf[k] * (1 + Fraction(1, 10**7))
        expect = float(min(sum(t for t in pmf if t <= cutoff), Fraction(1)))
        worst_b = max(worst_b, abs(binomial_test(k, n, p0) - expect))

    # signed-rank: full sign enumeration over observed midranks
    def midranks(mags):
        order = sorted(range(len(mags)), key=lambda j: mags[j])
        ranks = [0.0] * len(mags)
        j = 0
        while j < len(order):
            k2 = j
            while k2 + 1 < len(order) and mags[order[k2 + 1]] == mags[order[j]]:
                k2 += 1
            mid = (j + k2) / 2.0 + 1.0
            for idx in order[j:k2 + 1]:
                ranks[idx] = mid
            j = k2 + 1
        return ranks

    worst_w = 0.0
    for _ in range(60):
        n = rng.randint(6, 12)
        diffs = [round(rng.uniform(-3, 3) * 2) / 2 or 0.5 for _ in range(n)]
        ranks = midranks([abs(d) for d in diffs])
        w_plus = sum(r for r, d in zip(ranks, diffs) if d > 0)
        total = sum(ranks)
        le = ge = 0
        for signs in itertools.product((0, 1), repeat=n):
            w = sum(r for r, s in zip(ranks, signs) if s)
            le += w <= w_plus + 1e-9
            ge += w >= w_plus - 1e-9
        expect = min(1.0, 2.0 * min(le, ge) / 2**n)
        got = wilcoxon_signed_rank([(d, 0.0) for d in diffs])
        worst_w = max(worst_w, abs(got.p_value - expect))

    ok = worst_b <= 1e-10 and worst_w <= 1e-12
    _verdict("statistics-oracles", ok,
             f"binomial max |err| {worst_b:.2e} over 1000 cases; "
             f"signed-rank max |err| {worst_w:.2e} vs enumeration")


def test_a10_serial_codec():
    rng = np.random.default_rng(31337)
    bad = 0
    for _ in range(100_000):
        f = SerialFrame(
            tick=int(rng.integers(0, 2**32)),
            setpoints_c=tuple(rng.integers(-4000, 6000, 9) / 100.0),
            measured_c=tuple(rng.integers(-4000, 6000, 9) / 100.0),
            currents_a=tuple(rng.integers(-700, 701, 9) / 1000.0))
        if serial_frame_decode(serial_frame_encode(f)) != f:
            bad += 1

    flips = detected = 0
    for _ in range(50):
        f = SerialFrame(
            tick=int(rng.integers(0, 2**32)),
            setpoints_c=tuple(rng.integers(-4000, 6000, 9) / 100.0),
            measured_c=tuple(rng.integers(-4000, 6000, 9) / 100.0),
            currents_a=tuple(rng.integers(-700, 701, 9) / 1000.0))
        buf = serial_frame_encode(f)
        for bit in range(8 * FRAME_SIZE):
            corrupt = bytearray(buf)
            corrupt[bit // 8] ^= 1 << (bit % 8)
            flips += 1
            try:
                serial_frame_decode(bytes(corrupt))
            except FrameError:
                detected += 1

    ok = bad == 0 and detected == flips
    _verdict("serial-codec", ok,
             f"bijection over 1e5 frames ({bad} mismatches); "
             f"{detected}/{flips} single-bit flips detected")


def test_a11_service_liveness(tmp_path):
    service = DeviceService(ServiceSettings(out_dir=str(tmp_path),
                                            pace="wall"))
    service.start()
    try:
        service.subscribe()  # never drained: worst-case slow consumer
        time.sleep(60.0)
        stats = service.jitter_stats()
    finally:
        service.stop()
    frac = stats["p99_jitter_s"] / stats["tick_period_s"]
    ok = frac < 0.10 and stats["ticks"] > 50 * DEFAULT_TICK_HZ
    _verdict("service-liveness", ok,
             f"p99 tick jitter {stats['p99_jitter_s'] * 1e6:.0f} us = "
             f"{frac * 100:.2f}% of the {stats['tick_period_s'] * 1e3:.0f} ms "
             f"period over {stats['ticks']} ticks")
