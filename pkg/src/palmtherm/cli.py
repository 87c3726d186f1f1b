"""Command-line front end.

Subcommands: budget, simulate, calibrate, staircase, patterns, serve,
export-csv. Heavy subsystems import inside their handlers so the cheap
commands answer immediately. Exit codes: 0 success, 2 bad input or
config, 3 runtime fault (diverged simulation, failed fit, I/O trouble).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

PROG = "palmtherm"

_OBSERVER_KEYS = {"mu": "threshold_mu", "sigma": "slope_sigma",
                  "lapse": "lapse_rate", "guess": "guess_rate"}


def _common() -> argparse.ArgumentParser:
    # SUPPRESS keeps an unset subcommand flag from clobbering a value
    # given before the subcommand
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                   help="seed for every random draw (default 0)")
    p.add_argument("--config", default=argparse.SUPPRESS, metavar="FILE",
                   help="calibration or session config JSON")
    p.add_argument("--out", default=argparse.SUPPRESS, metavar="PATH",
                   help="output file or directory")
    return p


def _seed(ns: argparse.Namespace, default: int = 0) -> int:
    return getattr(ns, "seed", default)


def _out(ns: argparse.Namespace, default: str) -> Path:
    return Path(getattr(ns, "out", default))


def _calibration(ns: argparse.Namespace):
    from .calibrate import CalibrationRecord, load_default_calibration

    path = getattr(ns, "config", None)
    if path is None:
        return load_default_calibration()
    return CalibrationRecord.from_json(json.loads(Path(path).read_text()))


# -- budget ------------------------------------------------------------


def cmd_budget(ns: argparse.Namespace) -> int:
    from .tem import array_heat_budget, coolant_delta_t

    rec = _calibration(ns) if getattr(ns, "config", None) else None
    if rec is not None:
        tem, coolant = rec.tem, rec.coolant
    else:
        from .tem import CoolantParams, TemParams
        tem, coolant = TemParams(), CoolantParams()

    q = array_heat_budget(tem)
    dt = coolant_delta_t(q, coolant)
    print("array heat budget")
    print(f"  modules                   {tem.n_modules}")
    print(f"  per-module pumping        {tem.q_max:.3f} W")
    print(f"  array total               {q:.2f} W")
    print(f"  coolant flow              {coolant.flow_rate * 1e6:.2f} ml/s")
    print(f"  coolant temperature rise  {dt:.2f} K")
    return 0


# -- simulate ----------------------------------------------------------


def cmd_simulate(ns: argparse.Namespace) -> int:
    import csv

    import numpy as np

    from .control import step_response_metrics
    from .loop import DEFAULT_TICK_HZ, simulate_closed_loop, step_schedule
    from .plant import ArrayPlant, initial_state, plant_step, uniform_channels

    rec = _calibration(ns)
    ambient = ns.ambient
    if ns.mode is not None:
        sign = 1.0 if ns.mode == "warm" else -1.0
    else:
        sign = 1.0 if ns.step >= 0 else -1.0
    step = sign * abs(ns.step)

    plant = ArrayPlant(channels=uniform_channels(rec.model),
                       tem=rec.tem, coolant=rec.coolant)
    dt = 1.0 / DEFAULT_TICK_HZ
    n = int(round(ns.duration * DEFAULT_TICK_HZ))
    pre = int(round(ns.preroll * DEFAULT_TICK_HZ))
    if not 0 <= pre < n:
        raise ValueError("preroll must fit inside the duration")

    if ns.loop == "closed":
        sp = step_schedule(n, plant.n, ambient, ambient + step, pre)
        res = simulate_closed_loop(plant, rec.gains, sp, ns.duration)
        cols = zip(res.times, res.setpoints[:, 0], res.t_cold[:, 0],
                   res.t_hot[:, 0], res.measured[:, 0], res.currents[:, 0],
                   res.t_coolant)
        trace = res.t_cold[max(pre - 1, 0):, 0]
        m = step_response_metrics(np.arange(trace.size) * dt, trace)
        verdict = (f"closed-loop {step:+.1f} C step: 10-90% rise "
                   f"{m.rise_time_s:.2f} s, overshoot {m.overshoot_pct:.2f}%, "
                   f"settled at {m.settling_time_s:.2f} s")
    else:
        amps = sign * abs(ns.current)
        state = initial_state(plant, ambient)
        rows = []
        for k in range(n):
            i_cmd = amps if k >= pre else 0.0
            cur = np.full(plant.n, i_cmd)
            state = plant_step(state, cur, plant, dt)
            rows.append(((k + 1) * dt, ambient, state.t_cold[0],
                         state.t_hot[0], state.t_sensor[0], i_cmd,
                         state.t_coolant))
        cols = iter(rows)
        verdict = (f"open-loop {amps:+.3f} A step: plate settled near "
                   f"{rows[-1][2]:.2f} C (from {ambient:.1f} C)")

    out = _out(ns, "step_trace.csv")
    with open(out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["time_s", "setpoint_c", "t_cold_c", "t_hot_c",
                    "measured_c", "current_a", "t_coolant_c"])
        for row in cols:
            w.writerow([f"{v:.6f}" for v in row])
    print(verdict)
    print(f"trace written to {out}")
    return 0


# -- calibrate ---------------------------------------------------------


def cmd_calibrate(ns: argparse.Namespace) -> int:
    from .calibrate import fit_default_configuration

    rec = fit_default_configuration(target_warm_rise_s=ns.warm_rise,
                                    target_cool_rise_s=ns.cool_rise)
    out = _out(ns, "calibration.json")
    out.write_text(json.dumps(rec.to_json(), indent=1, sort_keys=True) + "\n")
    print(f"fit: warm rise {rec.warm_rise_s:.3f} s "
          f"(target {rec.target_warm_rise_s:.1f}), "
          f"cool rise {rec.cool_rise_s:.3f} s "
          f"(target {rec.target_cool_rise_s:.1f})")
    print(f"gains: kp={rec.gains.kp:.4f} ki={rec.gains.ki:.4f} "
          f"kd={rec.gains.kd:.4f} limit={rec.gains.output_limit_a:.4f} A")
    print(f"calibration written to {out}")
    return 0


# -- staircase ---------------------------------------------------------


def _parse_observer(text: str) -> dict:
    out: dict[str, float] = {}
    for part in text.split(","):
        key, _, value = part.partition("=")
        field = _OBSERVER_KEYS.get(key.strip())
        if field is None or not value:
            raise ValueError(
                f"bad observer item {part!r}; use mu=/sigma=/lapse=/guess=")
        out[field] = float(value)
    if "threshold_mu" not in out:
        raise ValueError("observer spec needs mu=<degC>")
    return out


def _parse_conditions(text: str) -> tuple[tuple[str, str], ...]:
    pairs = []
    for item in text.split(","):
        pol, _, pat = item.partition(":")
        if not pol or not pat:
            raise ValueError(f"bad condition {item!r}; use polarity:pattern")
        pairs.append((pol.strip(), pat.strip()))
    return tuple(pairs)


def cmd_staircase(ns: argparse.Namespace) -> int:
    obs = _parse_observer(ns.observer)
    conditions = _parse_conditions(ns.conditions)
    seed = _seed(ns)

    if ns.runs == 1:
        from .session import ObserverSpec, SessionConfig, run_session

        cfg = SessionConfig(
            experiment="staircase", out_dir=str(_out(ns, "sessions")),
            seed=seed, observer=ObserverSpec(**obs), conditions=conditions,
            reversals_to_stop=ns.reversals,
            stimulus_duration_s=ns.stimulus_duration)
        sdir = run_session(cfg)
        summary = json.loads((sdir / "summary.json").read_text())
        for cond in summary["results"]["conditions"]:
            print(f"  {cond['polarity']}/{cond['pattern']}  "
                  f"jnd {cond['jnd_c']:.3f} C  ({cond['trials']} trials)")
        print(f"session written to {sdir}")
        return 0

    # many-run mode: staircase engine only, no artifacts
    import statistics

    from .patterns import pattern_by_name
    from .psychophys import ObserverModel, StaircaseConfig, jnd_estimate, \
        run_staircase

    print(f"staircase monte carlo: {ns.runs} runs per condition, "
          f"observer {ns.observer}")
    for pol, pat in conditions:
        cfg = StaircaseConfig(polarity=pol, pattern=pattern_by_name(pat),
                              reversals_to_stop=ns.reversals,
                              reversals_averaged=min(8, ns.reversals),
                              stimulus_duration_s=ns.stimulus_duration)
        jnds, trials = [], []
        for r in range(ns.runs):
            observer = ObserverModel(seed=seed + r, **obs)
            st, log = run_staircase(cfg, observer)
            jnds.append(jnd_estimate(cfg, st))
            trials.append(len(log))
        sd = statistics.stdev(jnds) if len(jnds) > 1 else 0.0
        print(f"  {pol}/{pat}  jnd {statistics.mean(jnds):.3f} "
              f"+- {sd:.3f} C  (mean {statistics.mean(trials):.1f} trials)")
    return 0


# -- patterns ----------------------------------------------------------


def _render_grid(pattern) -> str:
    mask = pattern.mask()
    return "\n".join(
        "  " + " ".join("#" if mask[3 * r + c] else "." for c in range(3))
        for r in range(3))


def cmd_patterns_list(ns: argparse.Namespace) -> int:
    from .patterns import canonical_patterns

    for p in canonical_patterns(ns.offset):
        cells = ",".join(str(c) for c in sorted(p.active_cells))
        print(f"  {p.name:<14} cells {cells}")
    return 0


def cmd_patterns_show(ns: argparse.Namespace) -> int:
    from .patterns import pattern_by_name, pattern_file_load

    if ns.file:
        pattern = pattern_file_load(ns.name)
    else:
        pattern = pattern_by_name(ns.name, ns.offset)
    print(_render_grid(pattern))
    print(json.dumps(pattern.to_json(), indent=1, sort_keys=True))
    return 0


def cmd_patterns_play(ns: argparse.Namespace) -> int:
    from .device import DeviceConfig, default_device
    from .loop import DEFAULT_TICK_HZ
    from .patterns import SetpointStream, pattern_by_name, pattern_file_load

    import numpy as np

    if ns.file:
        pattern = pattern_file_load(ns.name)
    else:
        pattern = pattern_by_name(ns.name, ns.offset)
    dev = default_device(cfg=DeviceConfig(ambient_temp_c=ns.ambient))
    offsets = np.zeros((1, 9))
    offsets[0, pattern.mask()] = pattern.offset_c
    dev.play(SetpointStream(times_s=(0.0,), offsets_c=offsets,
                            duration_s=ns.hold))
    frame = dev.run_ticks(int(round(ns.hold * DEFAULT_TICK_HZ)))
    print(f"played {pattern.name!r} for {ns.hold:.1f} s "
          f"at {pattern.offset_c:+.1f} C")
    print("  cell  target_c  measured_c")
    for k in range(9):
        print(f"  {k:>4}  {frame.setpoints[k]:8.2f}  {frame.measured[k]:10.2f}")
    return 0


# -- serve -------------------------------------------------------------


def cmd_serve(ns: argparse.Namespace) -> int:
    from .service import ServiceSettings, serve

    settings = ServiceSettings(
        out_dir=str(_out(ns, "service-out")), ambient_c=ns.ambient,
        seed=_seed(ns), calibration_path=getattr(ns, "config", None),
        telemetry_hz=ns.telemetry_hz, pace=ns.pace)
    print(f"serving on http://{ns.host}:{ns.port} "
          f"(artifacts under {settings.out_dir})")
    serve(settings, host=ns.host, port=ns.port)
    return 0


# -- export-csv --------------------------------------------------------


def cmd_export_csv(ns: argparse.Namespace) -> int:
    import csv

    from .psychophys import trial_record_from_json
    from .session import CSV_COLUMNS, trial_csv_rows

    trials_path = Path(ns.session_dir) / "trials.jsonl"
    lines = trials_path.read_text().splitlines()
    records = [trial_record_from_json(json.loads(l)) for l in lines[1:]]
    out = _out(ns, str(Path(ns.session_dir) / "trials.csv"))
    with open(out, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=CSV_COLUMNS)
        w.writeheader()
        w.writerows(trial_csv_rows(records))
    print(f"{len(records)} trials written to {out}")
    return 0


# -- parser ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(
        prog=PROG, parents=[common],
        description="bench tools for the 3x3 thermal display simulator")
    sub = parser.add_subparsers(dest="command", metavar="command",
                                required=True)

    p = sub.add_parser("budget", parents=[common],
                       help="print the array heat budget table")
    p.set_defaults(func=cmd_budget)

    p = sub.add_parser("simulate", parents=[common],
                       help="step-response trace to CSV")
    p.add_argument("--step", type=float, default=20.0,
                   help="step size in degC; sign sets direction "
                        "(default +20, the characterization amplitude)")
    p.add_argument("--mode", choices=("warm", "cool"),
                   help="force step direction regardless of sign")
    p.add_argument("--loop", choices=("closed", "open"), default="closed",
                   help="closed: PID to setpoint; open: fixed current")
    p.add_argument("--current", type=float, default=0.1,
                   help="open-loop drive in amps (default 0.1)")
    p.add_argument("--duration", type=float, default=14.0,
                   help="simulated seconds (default 14)")
    p.add_argument("--preroll", type=float, default=1.0,
                   help="seconds at ambient before the step (default 1)")
    p.add_argument("--ambient", type=float, default=30.0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", parents=[common],
                       help="fit the plant to target rise times")
    p.add_argument("--warm-rise", type=float, default=1.4,
                   help="target warm 10-90%% rise in s (default 1.4)")
    p.add_argument("--cool-rise", type=float, default=2.4,
                   help="target cool 10-90%% rise in s (default 2.4)")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("staircase", parents=[common],
                       help="adaptive staircase runs with a synthetic observer")
    p.add_argument("--observer", default="mu=2.5,sigma=0.8",
                   help="observer spec, e.g. mu=2.5,sigma=0.8[,lapse=0.02]")
    p.add_argument("--runs", type=int, default=1,
                   help=">1 switches to monte-carlo mode without artifacts")
    p.add_argument("--conditions", default="warm:all,cool:all",
                   help="comma list of polarity:pattern (default warm:all,cool:all)")
    p.add_argument("--reversals", type=int, default=10)
    p.add_argument("--stimulus-duration", type=float, default=3.5)
    p.set_defaults(func=cmd_staircase)

    p = sub.add_parser("patterns", parents=[common],
                       help="list, inspect, or bench-play spatial patterns")
    psub = p.add_subparsers(dest="action", metavar="action", required=True)

    q = psub.add_parser("list", parents=[common])
    q.add_argument("--offset", type=float, default=8.0)
    q.set_defaults(func=cmd_patterns_list)

    q = psub.add_parser("show", parents=[common])
    q.add_argument("name", help="canonical name, or a file with --file")
    q.add_argument("--offset", type=float, default=8.0)
    q.add_argument("--file", action="store_true",
                   help="treat NAME as a pattern JSON path")
    q.set_defaults(func=cmd_patterns_show)

    q = psub.add_parser("play", parents=[common])
    q.add_argument("name")
    q.add_argument("--offset", type=float, default=8.0)
    q.add_argument("--hold", type=float, default=3.0)
    q.add_argument("--ambient", type=float, default=30.0)
    q.add_argument("--file", action="store_true")
    q.set_defaults(func=cmd_patterns_play)

    p = sub.add_parser("serve", parents=[common],
                       help="run the HTTP/stream service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8732)
    p.add_argument("--ambient", type=float, default=30.0)
    p.add_argument("--telemetry-hz", type=float, default=20.0)
    p.add_argument("--pace", choices=("wall", "max"), default="wall")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("export-csv", parents=[common],
                       help="flatten a session's trials.jsonl to CSV")
    p.add_argument("session_dir")
    p.set_defaults(func=cmd_export_csv)

    return parser


def main(argv: list[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        return ns.func(ns)
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 130
    except (ValueError, KeyError, FileNotFoundError, NotADirectoryError,
            IsADirectoryError) as err:
        msg = err.args[0] if isinstance(err, KeyError) and err.args else err
        print(f"error: {msg}", file=sys.stderr)
        return 2
    except (RuntimeError, OSError) as err:
        print(f"fault: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
