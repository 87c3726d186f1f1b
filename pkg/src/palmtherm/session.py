"""Session orchestration and artifact persistence.

A session drives the device tick-by-tick through one experiment
protocol and leaves four artifacts in its output directory:

    events.jsonl     lifecycle markers (stimulus on/off, responses,
                     reversals, clamps, faults) on the session clock
    trials.jsonl     one TrialRecord per trial
    telemetry.jsonl  downsampled device frames
    summary.json     per-experiment results and fidelity metrics

Every artifact embeds the schema version and the seed.  The session
clock is the simulation clock (integer nanoseconds, serialized as
microseconds), so a replay with the same config is byte-identical;
the only wall-clock field lives in summary.json under "wall_clock".
"""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path
from typing import IO, Mapping

import numpy as np

from .calibrate import CalibrationRecord, load_default_calibration
from .device import DeviceConfig, Mode, ThermalDevice, device_from_record
from .patterns import (
    MAX_OFFSET_C,
    brush_schedule,
    pattern_by_name,
)
from .psychophys import (
    DIFFERENT,
    SAME,
    ObserverModel,
    StaircaseConfig,
    TrialRecord,
    exp2_trial_table,
    exp3_pair_table,
    exp3_stream,
    fresh_state,
    jnd_estimate,
    staircase_next_stimulus,
    staircase_update,
)
from .stats import binomial_test

__all__ = [
    "EXPERIMENTS",
    "SessionConfigError",
    "ObserverSpec",
    "SessionConfig",
    "SessionRunner",
    "run_session",
    "session_config_from_json",
    "trial_csv_rows",
]

SCHEMA = 1
EXPERIMENTS = ("staircase", "matching", "pattern_change", "brush")

_STAIRCASE_PATTERNS = ("line", "all")


class SessionConfigError(ValueError):
    """Config rejection carrying every problem at once, not just the first."""

    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = list(problems)


@dataclass(frozen=True)
class ObserverSpec:
    """Parameters for the synthetic participant (seed comes from the session)."""

    threshold_mu: float = 2.5
    slope_sigma: float = 0.8
    lapse_rate: float = 0.0
    guess_rate: float = 0.0


@dataclass(frozen=True)
class SessionConfig:
    """Everything one session needs; validation reports all problems at once."""

    experiment: str
    out_dir: str
    participant_id: str = "sim-observer"
    seed: int = 0
    ambient_c: float = 30.0
    calibration_path: str | None = None
    observer: ObserverSpec | None = field(default_factory=ObserverSpec)
    telemetry_hz: float = 20.0
    # staircase protocol
    conditions: tuple[tuple[str, str], ...] = (
        ("warm", "line"),
        ("warm", "all"),
        ("cool", "line"),
        ("cool", "all"),
    )
    reference_offset_c: float = 4.0
    initial_step_c: float = 4.0
    reversals_to_stop: int = 10
    stimulus_duration_s: float = 3.5
    response_window_s: float = 1.0
    # temperature matching protocol
    repetitions: int = 10
    match_delta_c: float = 4.0
    match_base_offset_c: float = 8.0
    # pattern change protocol
    catch_per_polarity: int = 6
    pattern_offset_c: float = 8.0
    hold_s: float = 3.0
    # brush protocol
    brush_velocity_m_per_s: float = 3.5
    brush_path_row: int = 1
    brush_offset_c: float = 8.0
    brush_dwell_factor: float = 1.0

    def __post_init__(self) -> None:
        problems: list[str] = []
        if self.experiment not in EXPERIMENTS:
            problems.append(
                f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}"
            )
        if not self.participant_id:
            problems.append("participant_id must be non-empty")
        if not isinstance(self.seed, int):
            problems.append("seed must be an integer")
        if not 25.0 <= self.ambient_c <= 36.0:
            problems.append(f"ambient_c out of [25, 36]: {self.ambient_c}")
        if self.calibration_path is not None and not Path(self.calibration_path).exists():
            problems.append(f"calibration file not found: {self.calibration_path}")
        if self.telemetry_hz <= 0:
            problems.append("telemetry_hz must be positive")
        for pol, pat in self.conditions:
            if pol not in ("warm", "cool"):
                problems.append(f"bad polarity in conditions: {pol!r}")
            if pat not in _STAIRCASE_PATTERNS:
                problems.append(f"staircase pattern must be line or all: {pat!r}")
        if not 0 < self.reference_offset_c <= MAX_OFFSET_C:
            problems.append("reference_offset_c out of range")
        if self.initial_step_c <= 0:
            problems.append("initial_step_c must be positive")
        if self.reversals_to_stop < 1:
            problems.append("reversals_to_stop must be at least 1")
        if self.stimulus_duration_s <= 0:
            problems.append("stimulus_duration_s must be positive")
        if self.response_window_s <= 0:
            problems.append("response_window_s must be positive")
        if self.repetitions < 2 or self.repetitions % 2:
            problems.append("repetitions must be even and at least 2")
        if self.match_delta_c <= 0:
            problems.append("match_delta_c must be positive")
        if self.match_base_offset_c + self.match_delta_c > MAX_OFFSET_C:
            problems.append("match base offset plus delta exceeds the envelope")
        if self.catch_per_polarity < 0:
            problems.append("catch_per_polarity must be non-negative")
        if not 0 < self.pattern_offset_c <= MAX_OFFSET_C:
            problems.append("pattern_offset_c out of range")
        if self.hold_s <= 0:
            problems.append("hold_s must be positive")
        if self.brush_velocity_m_per_s <= 0:
            problems.append("brush_velocity_m_per_s must be positive")
        if self.brush_path_row not in (0, 1, 2):
            problems.append("brush_path_row must be 0, 1, or 2")
        if self.brush_dwell_factor <= 0:
            problems.append("brush_dwell_factor must be positive")
        if problems:
            raise SessionConfigError(problems)

    @property
    def session_id(self) -> str:
        return f"{self.experiment}-s{self.seed}-{self.participant_id}"

    def to_json(self) -> dict:
        doc: dict = {"schema": SCHEMA, "kind": "session_config"}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "observer":
                v = None if v is None else asdict(v)
            elif f.name == "conditions":
                v = [list(c) for c in v]
            doc[f.name] = v
        return doc


def session_config_from_json(doc: Mapping[str, object]) -> SessionConfig:
    allowed = {f.name for f in fields(SessionConfig)} | {"schema", "kind"}
    unknown = set(doc) - allowed
    if unknown:
        raise SessionConfigError([f"unknown config fields: {sorted(unknown)}"])
    if doc.get("schema") != SCHEMA:
        raise SessionConfigError([f"unsupported schema: {doc.get('schema')!r}"])
    if doc.get("kind") != "session_config":
        raise SessionConfigError([f"not a session config: {doc.get('kind')!r}"])
    kwargs = {k: v for k, v in doc.items() if k not in ("schema", "kind")}
    if kwargs.get("observer") is not None:
        obs = kwargs["observer"]
        if not isinstance(obs, Mapping):
            raise SessionConfigError(["observer must be an object or null"])
        kwargs["observer"] = ObserverSpec(**obs)
    if "conditions" in kwargs:
        kwargs["conditions"] = tuple(tuple(c) for c in kwargs["conditions"])
    return SessionConfig(**kwargs)


def _dumps(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


class _Writer:
    """One append-only JSON Lines artifact with a header row."""

    def __init__(self, path: Path, header: dict):
        self._fh: IO[str] = open(path, "w", encoding="utf-8")
        self.write(header)

    def write(self, doc: dict) -> None:
        self._fh.write(_dumps(doc) + "\n")

    def close(self) -> None:
        self._fh.close()


class SessionRunner:
    """Owns the device, the session clock, and the artifact writers.

    The runner is single-threaded: commands, ticks, and writes are all
    serialized through its methods.  The service wraps it in a control
    thread; run_session drives it inline against an observer.
    """

    def __init__(self, cfg: SessionConfig, respond=None):
        self.cfg = cfg
        if cfg.calibration_path is not None:
            record = CalibrationRecord.from_json(
                json.loads(Path(cfg.calibration_path).read_text())
            )
        else:
            record = load_default_calibration()
        self.device: ThermalDevice = device_from_record(
            record,
            noise_seed=cfg.seed,
            cfg=DeviceConfig(ambient_temp_c=cfg.ambient_c),
        )
        self.tick_ns = round(self.device.backend.dt * 1e9)
        self.t_ns = 0
        self._rng = random.Random(cfg.seed)
        self._respond = respond
        self._dir: Path | None = None
        self._events: _Writer | None = None
        self._trials: _Writer | None = None
        self._telemetry: _Writer | None = None
        self._telemetry_stride = max(
            1, round(1.0 / (cfg.telemetry_hz * self.device.backend.dt))
        )
        self._trial_index = 0
        self._last_clamped = False
        self.results: dict = {}
        # optional mirror for live consumers (the service's stream fan-out)
        self.event_sink = None

    # -- clock and artifacts ------------------------------------------------

    @property
    def t_us(self) -> int:
        return self.t_ns // 1000

    def open_artifacts(self, session_dir: Path) -> None:
        session_dir.mkdir(parents=True, exist_ok=True)
        self._dir = session_dir
        header = {
            "schema": SCHEMA,
            "session_id": self.cfg.session_id,
            "participant_id": self.cfg.participant_id,
            "experiment": self.cfg.experiment,
            "seed": self.cfg.seed,
            "ambient_c": self.cfg.ambient_c,
        }
        self._events = _Writer(session_dir / "events.jsonl",
                               {**header, "kind": "events_header"})
        self._trials = _Writer(session_dir / "trials.jsonl",
                               {**header, "kind": "trials_header"})
        self._telemetry = _Writer(session_dir / "telemetry.jsonl",
                                  {**header, "kind": "telemetry_header"})

    def event(self, kind: str, payload: dict | None = None) -> None:
        if self._events is None:
            return
        doc = {"kind": kind, "t_us": self.t_us, "payload": payload or {}}
        self._events.write(doc)
        if self.event_sink is not None:
            self.event_sink(doc)

    def write_trial(self, record: TrialRecord) -> None:
        if self._trials is not None:
            self._trials.write(record.to_json())

    def close_artifacts(self) -> None:
        for w in (self._events, self._trials, self._telemetry):
            if w is not None:
                w.close()
        self._events = self._trials = self._telemetry = None

    # -- ticking ------------------------------------------------------------

    def tick(self):
        """One control tick: advance device and clock, log telemetry/events."""
        frame = self.device.device_tick()
        self.t_ns += self.tick_ns
        if frame.tick_index % self._telemetry_stride == 0:
            if self._telemetry is not None:
                self._telemetry.write({"t_us": self.t_us, **frame.to_json()})
        clamped = frame.clamp_count > 0
        if clamped and not self._last_clamped:
            self.event("clamp", {"count": frame.clamp_count})
        self._last_clamped = clamped
        if frame.fault:
            self.event("fault", {"warnings": list(frame.warnings)})
        if frame.tick_index % 100 == 0:
            self.event("tick", {"tick": frame.tick_index})
        return frame

    def run_for(self, duration_s: float) -> None:
        """Advance the device and the clock by a whole number of ticks."""
        n = max(1, round(duration_s / self.device.backend.dt))
        for _ in range(n):
            self.tick()

    def hold_ambient(self, duration_s: float) -> None:
        self.device.set_mode(Mode.IDLE)
        self.run_for(duration_s)

    def present_direct(self, setpoints: np.ndarray, duration_s: float) -> None:
        self.device.set_direct_setpoints(setpoints)
        self.run_for(duration_s)

    # -- responses ----------------------------------------------------------

    def answer(self, delta_c: float) -> tuple[str, float]:
        """Response plus its latency.  The latency draw is seeded, so a
        replay is bit-identical; it stands in for human think time."""
        if self._respond is None:
            raise RuntimeError("session has no response source")
        response = self._respond(delta_c)
        rt = round(self._rng.uniform(0.35, self.cfg.response_window_s), 6)
        return response, rt

    def next_trial_index(self) -> int:
        i = self._trial_index
        self._trial_index += 1
        return i


# -- experiment protocols ---------------------------------------------------


def _observer_for(cfg: SessionConfig, salt: int) -> ObserverModel:
    spec = cfg.observer
    assert spec is not None
    return ObserverModel(
        threshold_mu=spec.threshold_mu,
        slope_sigma=spec.slope_sigma,
        lapse_rate=spec.lapse_rate,
        guess_rate=spec.guess_rate,
        seed=cfg.seed * 1009 + salt,
    )


def _cells_setpoints(ambient: float, cells, temp: float) -> np.ndarray:
    sp = np.full(9, ambient)
    for c in cells:
        sp[c] = temp
    return sp


def _run_staircase(run: SessionRunner) -> dict:
    cfg = run.cfg
    per_condition = []
    for polarity, pattern_name in cfg.conditions:
        pattern = pattern_by_name(pattern_name, cfg.reference_offset_c)
        st_cfg = StaircaseConfig(
            polarity=polarity,
            ambient_c=cfg.ambient_c,
            reference_offset_c=cfg.reference_offset_c,
            initial_step_c=cfg.initial_step_c,
            reversals_to_stop=cfg.reversals_to_stop,
            reversals_averaged=min(8, cfg.reversals_to_stop),
            stimulus_duration_s=cfg.stimulus_duration_s,
            pattern=pattern,
        )
        st = fresh_state(st_cfg)
        n_reversals_seen = 0
        while not st.finished:
            reference, test = staircase_next_stimulus(st_cfg, st)
            delta = st.current_step_c
            trial = run.next_trial_index()
            run.event("stimulus_on", {
                "trial": trial, "experiment": "staircase",
                "polarity": polarity, "pattern": pattern_name,
                "reference_c": reference, "test_c": test, "delta_c": delta,
            })
            cells = sorted(pattern.active_cells)
            run.present_direct(
                _cells_setpoints(cfg.ambient_c, cells, reference),
                st_cfg.stimulus_duration_s,
            )
            # No inter-stimulus interval: the test follows immediately.
            run.present_direct(
                _cells_setpoints(cfg.ambient_c, cells, test),
                st_cfg.stimulus_duration_s,
            )
            run.event("stimulus_off", {"trial": trial})
            response, rt = run.answer(delta)
            run.hold_ambient(rt)
            run.event("response", {"trial": trial, "response": response,
                                   "response_time_s": rt})
            run.write_trial(TrialRecord(
                session_id=cfg.session_id,
                participant_id=cfg.participant_id,
                experiment="staircase",
                trial_index=trial,
                condition={"polarity": polarity, "pattern": pattern_name},
                stimulus={"reference_c": reference, "test_c": test,
                          "delta_c": delta},
                response=response,
                response_time_s=rt,
                ground_truth=None,
                timestamp_s=run.t_us / 1e6,
            ))
            st = staircase_update(st_cfg, st, response)
            if len(st.reversal_steps) > n_reversals_seen:
                n_reversals_seen = len(st.reversal_steps)
                run.event("reversal", {
                    "trial": trial, "count": n_reversals_seen,
                    "step_c": st.reversal_steps[-1],
                })
        per_condition.append({
            "polarity": polarity,
            "pattern": pattern_name,
            "jnd_c": jnd_estimate(st_cfg, st),
            "trials": st.trial_count,
            "reversals": list(st.reversal_steps),
        })
        run.hold_ambient(1.0)
    return {"conditions": per_condition}


def _run_matching(run: SessionRunner) -> dict:
    cfg = run.cfg
    table = exp2_trial_table(
        seed=cfg.seed,
        repetitions=cfg.repetitions,
        delta_c=cfg.match_delta_c,
        base_offset_c=cfg.match_base_offset_c,
        ambient_c=cfg.ambient_c,
    )
    all_cells = list(range(9))
    tally: dict[tuple[str, str], list[int]] = {}
    for t in table:
        trial = run.next_trial_index()
        run.event("stimulus_on", {
            "trial": trial, "experiment": "matching",
            "presentation": t.presentation, "polarity": t.polarity,
            "reference_c": t.t_reference_c, "comparison_c": t.t_comparison_c,
        })
        if t.presentation == "virtual":
            # The device renders both surfaces in sequence.
            run.present_direct(
                _cells_setpoints(cfg.ambient_c, all_cells, t.t_reference_c), 3.0
            )
            run.present_direct(
                _cells_setpoints(cfg.ambient_c, all_cells, t.t_comparison_c), 3.0
            )
        else:
            # Bare-skin contact happens off-device; the clock still runs.
            run.hold_ambient(6.0)
        run.event("stimulus_off", {"trial": trial})
        delta = abs(t.t_comparison_c - t.t_reference_c)
        response, rt = run.answer(delta)
        run.hold_ambient(rt)
        run.event("response", {"trial": trial, "response": response,
                               "response_time_s": rt})
        correct = int(response == t.ground_truth)
        key = (t.presentation, t.polarity)
        tally.setdefault(key, []).append(correct)
        run.write_trial(TrialRecord(
            session_id=cfg.session_id,
            participant_id=cfg.participant_id,
            experiment="matching",
            trial_index=trial,
            condition={"presentation": t.presentation, "polarity": t.polarity},
            stimulus={"reference_c": t.t_reference_c,
                      "comparison_c": t.t_comparison_c},
            response=response,
            response_time_s=rt,
            ground_truth=t.ground_truth,
            timestamp_s=run.t_us / 1e6,
        ))
    cells = []
    for (presentation, polarity), marks in sorted(tally.items()):
        n_correct = sum(marks)
        cells.append({
            "presentation": presentation,
            "polarity": polarity,
            "n": len(marks),
            "accuracy": n_correct / len(marks),
            "binomial_p_vs_chance": binomial_test(n_correct, len(marks)),
        })
    return {"cells": cells}


def _run_pattern_change(run: SessionRunner) -> dict:
    cfg = run.cfg
    table = exp3_pair_table(
        seed=cfg.seed,
        catch_per_polarity=cfg.catch_per_polarity,
        offset_magnitude_c=cfg.pattern_offset_c,
    )
    dt = run.device.backend.dt
    tally: dict[str, list[int]] = {"warm": [], "cool": []}
    false_alarms = {"warm": [0, 0], "cool": [0, 0]}
    worst_boundary_err = 0.0
    for t in table:
        stream = exp3_stream(t, hold_s=cfg.hold_s)
        trial = run.next_trial_index()
        run.event("stimulus_on", {
            "trial": trial, "experiment": "pattern_change",
            "polarity": t.polarity, "first": t.first, "second": t.second,
            "changed": t.changed,
        })
        start_tick = run.device.tick_index
        run.device.play(stream)
        switch_tick = None
        first_pattern = pattern_by_name(t.first, t.offset_c)
        probe = sorted(set(range(9)) - first_pattern.active_cells)
        n_ticks = max(1, round(stream.duration_s / dt))
        for _ in range(n_ticks):
            frame = run.tick()
            if (switch_tick is None and t.changed
                    and any(frame.setpoints[c] != cfg.ambient_c for c in probe)):
                switch_tick = frame.tick_index
        if t.changed and switch_tick is not None:
            achieved = (switch_tick - start_tick) * dt
            worst_boundary_err = max(worst_boundary_err,
                                     abs(achieved - cfg.hold_s))
        run.event("stimulus_off", {"trial": trial})
        # Detection is a judgment about spatial change, not magnitude;
        # the synthetic stand-in sees the full offset when it changed.
        delta = cfg.pattern_offset_c if t.changed else 0.0
        response, rt = run.answer(delta)
        run.hold_ambient(rt)
        run.event("response", {"trial": trial, "response": response,
                               "response_time_s": rt})
        truth = DIFFERENT if t.changed else SAME
        correct = int(response == truth)
        if t.changed:
            tally[t.polarity].append(correct)
        else:
            false_alarms[t.polarity][0] += int(response == DIFFERENT)
            false_alarms[t.polarity][1] += 1
        run.write_trial(TrialRecord(
            session_id=cfg.session_id,
            participant_id=cfg.participant_id,
            experiment="pattern_change",
            trial_index=trial,
            condition={"polarity": t.polarity, "first": t.first,
                       "second": t.second},
            stimulus={"offset_c": t.offset_c, "hold_s": cfg.hold_s},
            response=response,
            response_time_s=rt,
            ground_truth=truth,
            timestamp_s=run.t_us / 1e6,
        ))
    polarity_summary = []
    for polarity in ("warm", "cool"):
        marks = tally[polarity]
        fa, fn = false_alarms[polarity]
        polarity_summary.append({
            "polarity": polarity,
            "changed_trials": len(marks),
            "detection_accuracy": sum(marks) / len(marks) if marks else None,
            "catch_trials": fn,
            "false_alarms": fa,
        })
    return {
        "polarities": polarity_summary,
        "boundary_error_s_max": worst_boundary_err,
        "boundary_tolerance_s": dt,
    }


def _run_brush(run: SessionRunner) -> dict:
    cfg = run.cfg
    schedule = brush_schedule(
        run.device.geometry,
        velocity_m_per_s=cfg.brush_velocity_m_per_s,
        offset_c=cfg.brush_offset_c,
        path_row=cfg.brush_path_row,
        dwell_factor=cfg.brush_dwell_factor,
    )
    hz = 1.0 / run.device.backend.dt
    stream = schedule.tick_stream(hz)
    trial = run.next_trial_index()
    run.event("stimulus_on", {
        "trial": trial, "experiment": "brush",
        "velocity_m_per_s": cfg.brush_velocity_m_per_s,
        "cells": [e.cell for e in schedule.events],
    })
    ambient = cfg.ambient_c
    peak = np.zeros(9)
    run.device.play(stream)
    n_ticks = max(1, round((stream.duration_s + 2.0) / run.device.backend.dt))
    for _ in range(n_ticks):
        frame = run.tick()
        peak = np.maximum(peak, np.abs(np.asarray(frame.measured) - ambient))
    run.event("stimulus_off", {"trial": trial})
    inter = schedule.inter_onset_s
    path_cells = [e.cell for e in schedule.events]
    run.write_trial(TrialRecord(
        session_id=cfg.session_id,
        participant_id=cfg.participant_id,
        experiment="brush",
        trial_index=trial,
        condition={"path_row": cfg.brush_path_row,
                   "velocity_m_per_s": cfg.brush_velocity_m_per_s},
        stimulus={"offset_c": cfg.brush_offset_c,
                  "inter_onset_s": float(inter),
                  "cells": path_cells},
        response=None,
        response_time_s=None,
        ground_truth=None,
        timestamp_s=run.t_us / 1e6,
    ))
    return {
        "velocity_m_per_s": cfg.brush_velocity_m_per_s,
        "pitch_mm": run.device.geometry.pitch_mm,
        "commanded_inter_onset_s": float(inter),
        "commanded_inter_onset_exact": f"{inter.numerator}/{inter.denominator}",
        "commanded_inter_onset_ms": float(inter) * 1e3,
        "commanded_offset_c": cfg.brush_offset_c,
        "path_cells": path_cells,
        "achieved_amplitude_c": {
            str(c): float(peak[c]) for c in path_cells
        },
        "note": "sub-tick onsets are snapped to the control tick; the "
                "plant's thermal bandwidth limits the achieved amplitude",
    }


_PROTOCOLS = {
    "staircase": _run_staircase,
    "matching": _run_matching,
    "pattern_change": _run_pattern_change,
    "brush": _run_brush,
}


def run_session(cfg: SessionConfig, out_root: Path | None = None) -> Path:
    """Execute one experiment end to end; returns the session directory."""
    if cfg.observer is None and cfg.experiment != "brush":
        raise SessionConfigError(
            ["observer must be set for unattended sessions"]
        )
    root = Path(out_root) if out_root is not None else Path(cfg.out_dir)
    session_dir = root / cfg.session_id

    respond = None
    if cfg.observer is not None:
        respond = _observer_for(cfg, 0).respond
    run = SessionRunner(cfg, respond=respond)
    run.open_artifacts(session_dir)
    (session_dir / "config.json").write_text(_dumps(cfg.to_json()) + "\n")
    run.event("session_start", {"experiment": cfg.experiment})
    status, error = "completed", None
    try:
        # Settle at ambient so trial one starts from the hold state.
        run.hold_ambient(1.0)
        run.results = _PROTOCOLS[cfg.experiment](run)
    except Exception as exc:  # noqa: BLE001 - recorded, then re-raised
        status, error = "aborted", f"{type(exc).__name__}: {exc}"
        raise
    finally:
        run.event("session_end", {"status": status})
        run.close_artifacts()
        summary = {
            "schema": SCHEMA,
            "kind": "summary",
            "session_id": cfg.session_id,
            "participant_id": cfg.participant_id,
            "experiment": cfg.experiment,
            "seed": cfg.seed,
            "ambient_c": cfg.ambient_c,
            "status": status,
            "error": error,
            "sim_duration_s": run.t_us / 1e6,
            "results": run.results,
            "wall_clock": datetime.now(timezone.utc).isoformat(),
        }
        (session_dir / "summary.json").write_text(
            json.dumps(summary, sort_keys=True, indent=1) + "\n"
        )
    return session_dir


# -- CSV hand-off -------------------------------------------------------------

CSV_COLUMNS = (
    "participant",
    "experiment",
    "condition",
    "stimulus",
    "response",
    "rt",
    "ground_truth",
)


def trial_csv_rows(records) -> list[dict]:
    """Flatten TrialRecords to the documented export column set."""
    rows = []
    for r in records:
        rows.append({
            "participant": r.participant_id,
            "experiment": r.experiment,
            "condition": _dumps(dict(r.condition)),
            "stimulus": _dumps(dict(r.stimulus)),
            "response": "" if r.response is None else r.response,
            "rt": "" if r.response_time_s is None else r.response_time_s,
            "ground_truth": "" if r.ground_truth is None else r.ground_truth,
        })
    return rows
