"""Compiled-vs-reference kernel timings.

Runs itself once per backend (the kernel is chosen at import time via
PALMTHERM_KERNEL) and prints a comparison table:

    python3 benchmarks/bench_kernels.py
"""

import argparse
import json
import os
import subprocess
import sys
import time


def _bench(fn, min_time_s: float = 0.4) -> tuple[float, int]:
    """Seconds per call, by repetition until min_time_s has elapsed."""
    fn()  # warmup / JIT-ish costs out of the measurement
    reps = 0
    t0 = time.perf_counter()
    while True:
        fn()
        reps += 1
        elapsed = time.perf_counter() - t0
        if elapsed >= min_time_s:
            return elapsed / reps, reps


def run_worker() -> dict:
    import numpy as np

    from palmtherm import KERNEL_BACKEND
    from palmtherm.calibrate import load_default_calibration
    from palmtherm.device import device_from_record
    from palmtherm.loop import simulate_closed_loop, step_schedule
    from palmtherm.plant import ArrayPlant, initial_state, plant_step, \
        uniform_channels

    rec = load_default_calibration()
    plant = ArrayPlant(channels=uniform_channels(rec.model),
                       tem=rec.tem, coolant=rec.coolant)
    out: dict = {"backend": KERNEL_BACKEND}

    state = initial_state(plant, 30.0)
    currents = np.full(9, 0.05)
    s, n = _bench(lambda: plant_step(state, currents, plant, 0.01))
    out["plant_step_us"] = s * 1e6

    sp = step_schedule(500, 9, 30.0, 40.0, 100)
    s, n = _bench(lambda: simulate_closed_loop(plant, rec.gains, sp, 5.0))
    out["closed_loop_5s_ms"] = s * 1e3

    dev = device_from_record(rec, noise_seed=1)
    s, n = _bench(lambda: dev.run_ticks(100))
    out["device_tick_us"] = s * 1e6 / 100

    return out


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--worker", action="store_true")
    ns = ap.parse_args()

    if ns.worker:
        print(json.dumps(run_worker()))
        return 0

    results = {}
    for backend in ("compiled", "python"):
        env = dict(os.environ, PALMTHERM_KERNEL=backend)
        proc = subprocess.run(
            [sys.executable, __file__, "--worker"],
            capture_output=True, text=True, env=env)
        if proc.returncode != 0:
            msg = proc.stderr.strip().splitlines()
            print(f"{backend}: unavailable "
                  f"({msg[-1] if msg else 'worker failed'})")
            continue
        results[backend] = json.loads(proc.stdout)

    if not results:
        return 1

    rows = [("plant_step (9 ch, 10 substeps)", "plant_step_us", "us"),
            ("closed-loop sim, 5 s @ 100 Hz", "closed_loop_5s_ms", "ms"),
            ("device_tick (controller + plant)", "device_tick_us", "us")]
    print(f"{'kernel benchmark':<36}"
          + "".join(f"{b:>14}" for b in results)
          + ("       speedup" if len(results) == 2 else ""))
    for label, key, unit in rows:
        vals = [results[b][key] for b in results]
        line = f"{label:<36}" + "".join(f"{v:>11.1f} {unit}" for v in vals)
        if len(vals) == 2:
            line += f"{vals[1] / vals[0]:>13.1f}x"
        print(line)
    return 0


if __name__ == "__main__":
    sys.exit(main())
