"""HTTP + duplex-socket service hosting the device control loop.

Three concurrency contracts, kept deliberately small:

  1. The control tick is never blocked by clients.  Telemetry fans out
     through bounded drop-oldest deques; a stalled consumer loses old
     frames, the tick never waits.
  2. Every mutation travels through one command queue and is applied
     between ticks by the control thread, which owns all device and
     session state.  Callers block on a Future for the reply.
  3. Reads (GET /state) see an immutable snapshot published each tick.

Interactive sessions reuse the session module's artifact writers.  The
staircase engine is the same one the simulated-observer path drives;
only the response source differs (HTTP instead of ObserverModel), so a
response sequence replayed over HTTP yields a byte-identical
trials.jsonl.  Trial timestamps run on a protocol clock built from the
configured stimulus durations and the client-reported response times,
not on wall arrival times, which is what makes that determinism hold.
"""

from __future__ import annotations

import gc
import json
import queue
import threading
import time
from collections import deque
from concurrent.futures import Future
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Literal

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.concurrency import run_in_threadpool
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .calibrate import CalibrationRecord, load_default_calibration
from .device import DeviceConfig, Mode, N_CELLS, device_from_record
from .patterns import (
    MAX_OFFSET_C,
    Pattern,
    SetpointStream,
    canonical_patterns,
    pattern_by_name,
)
from .psychophys import (
    DIFFERENT,
    SAME,
    StaircaseConfig,
    TrialRecord,
    fresh_state,
    jnd_estimate,
    staircase_next_stimulus,
    staircase_update,
)
from .session import (
    SCHEMA,
    SessionConfig,
    SessionConfigError,
    SessionRunner,
    _cells_setpoints,
    _dumps,
    session_config_from_json,
)

__all__ = [
    "ApiError",
    "ServiceSettings",
    "DeviceService",
    "create_app",
    "serve",
]


class ApiError(Exception):
    """Maps to the structured error body {"error": {code, message, detail}}."""

    def __init__(self, status_code: int, code: str, message: str,
                 detail=None):
        super().__init__(message)
        self.status_code = status_code
        self.code = code
        self.message = message
        self.detail = detail

    def body(self) -> dict:
        err = {"code": self.code, "message": self.message}
        if self.detail is not None:
            err["detail"] = self.detail
        return {"error": err}


class _ResponseRejected(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass(frozen=True)
class ServiceSettings:
    """Device-side configuration of a running service."""

    out_dir: str
    ambient_c: float = 30.0
    seed: int = 0
    calibration_path: str | None = None
    telemetry_hz: float = 20.0
    pace: Literal["wall", "max"] = "wall"
    queue_maxlen: int = 256

    def __post_init__(self):
        if self.telemetry_hz <= 0:
            raise ValueError("telemetry_hz must be positive")
        if self.pace not in ("wall", "max"):
            raise ValueError("pace must be 'wall' or 'max'")
        if self.queue_maxlen < 8:
            raise ValueError("queue_maxlen must be at least 8")


class _Subscriber:
    """One /stream client: a drop-oldest deque plus a wakeup flag."""

    def __init__(self, maxlen: int):
        self.items: deque[str] = deque(maxlen=maxlen)
        self.signal = threading.Event()
        self.closed = False

    def push(self, item: str) -> None:
        self.items.append(item)      # full deque silently drops the oldest
        self.signal.set()

    def wait_batch(self, timeout: float) -> list[str]:
        self.signal.wait(timeout)
        self.signal.clear()
        out = []
        while True:
            try:
                out.append(self.items.popleft())
            except IndexError:
                return out


class _InteractiveStaircase:
    """The staircase protocol driven by HTTP responses instead of an observer.

    Stimulus phases are timed in control ticks; the response wait has no
    deadline.  A response is accepted from the start of the test stimulus
    (buffered until stimulus end) through the waiting phase, and exactly
    one response advances each trial.
    """

    def __init__(self, runner: SessionRunner):
        self.runner = runner
        cfg = runner.cfg
        self.dt = runner.device.backend.dt
        self.us_per_tick = round(self.dt * 1e6)
        self.protocol_us = 0
        self.conditions = list(cfg.conditions)
        self.ci = 0
        self.summary_conditions: list[dict] = []
        self.finished = False
        self.pending: tuple[str, float | None] | None = None
        self.trial: dict | None = None
        self._begin_condition()
        runner.device.set_mode(Mode.IDLE)
        self._set_phase("settle", 1.0)

    # -- plumbing -------------------------------------------------------

    def _ticks(self, duration_s: float) -> int:
        return max(1, round(duration_s / self.dt))

    def _set_phase(self, phase: str, duration_s: float) -> None:
        self.phase = phase
        self.ticks_left = self._ticks(duration_s)
        self._phase_cost = self.ticks_left * self.us_per_tick

    def _begin_condition(self) -> None:
        cfg = self.runner.cfg
        polarity, pattern_name = self.conditions[self.ci]
        pattern = pattern_by_name(pattern_name, cfg.reference_offset_c)
        self.st_cfg = StaircaseConfig(
            polarity=polarity,
            ambient_c=cfg.ambient_c,
            reference_offset_c=cfg.reference_offset_c,
            initial_step_c=cfg.initial_step_c,
            reversals_to_stop=cfg.reversals_to_stop,
            reversals_averaged=min(8, cfg.reversals_to_stop),
            stimulus_duration_s=cfg.stimulus_duration_s,
            pattern=pattern,
        )
        self.st = fresh_state(self.st_cfg)
        self.polarity = polarity
        self.pattern_name = pattern_name
        self.cells = sorted(pattern.active_cells)

    # -- ticking --------------------------------------------------------

    def on_tick(self) -> None:
        """Runs before each device tick; owns all phase transitions."""
        if self.phase in ("awaiting", "done"):
            return
        if self.ticks_left == 0:
            self._transition()
            if self.phase in ("awaiting", "done"):
                return
        self.ticks_left -= 1

    def _transition(self) -> None:
        run = self.runner
        cfg = run.cfg
        self.protocol_us += self._phase_cost
        if self.phase == "settle":
            self._start_trial()
        elif self.phase == "reference":
            run.device.set_direct_setpoints(_cells_setpoints(
                cfg.ambient_c, self.cells, self.trial["test_c"]))
            self._set_phase("test", self.st_cfg.stimulus_duration_s)
        elif self.phase == "test":
            run.event("stimulus_off", {"trial": self.trial["index"]})
            run.device.set_mode(Mode.IDLE)
            if self.pending is not None:
                response, rt_s = self.pending
                self.pending = None
                self._apply(response, rt_s)
            else:
                self.phase = "awaiting"
        elif self.phase == "pause":
            self.ci += 1
            if self.ci == len(self.conditions):
                self.phase = "done"
                self.finished = True
            else:
                self._begin_condition()
                self._start_trial()

    def _start_trial(self) -> None:
        run = self.runner
        cfg = run.cfg
        reference, test = staircase_next_stimulus(self.st_cfg, self.st)
        delta = self.st.current_step_c
        index = run.next_trial_index()
        self.trial = {"index": index, "reference_c": reference,
                      "test_c": test, "delta_c": delta}
        run.event("stimulus_on", {
            "trial": index, "experiment": "staircase",
            "polarity": self.polarity, "pattern": self.pattern_name,
            "reference_c": reference, "test_c": test, "delta_c": delta,
        })
        run.device.set_direct_setpoints(_cells_setpoints(
            cfg.ambient_c, self.cells, reference))
        self._set_phase("reference", self.st_cfg.stimulus_duration_s)

    # -- responses ------------------------------------------------------

    def submit(self, response: str, rt_s: float | None) -> dict:
        if self.phase == "test" and self.pending is None:
            self.pending = (response, rt_s)
            return {"accepted": True, "trial": self.trial["index"],
                    "applied": "at_stimulus_end"}
        if self.phase == "awaiting":
            info = self._apply(response, rt_s)
            return {"accepted": True, "applied": "immediate", **info}
        if self.phase == "done":
            raise _ResponseRejected("session already finished")
        if self.pending is not None:
            raise _ResponseRejected(
                f"a response for trial {self.trial['index']} is already "
                "recorded")
        raise _ResponseRejected("no trial is awaiting a response")

    def _apply(self, response: str, rt_s: float | None) -> dict:
        run = self.runner
        cfg = run.cfg
        trial = self.trial
        if rt_s is not None:
            self.protocol_us += self._ticks(rt_s) * self.us_per_tick
        run.event("response", {"trial": trial["index"], "response": response,
                               "response_time_s": rt_s})
        run.write_trial(TrialRecord(
            session_id=cfg.session_id,
            participant_id=cfg.participant_id,
            experiment="staircase",
            trial_index=trial["index"],
            condition={"polarity": self.polarity,
                       "pattern": self.pattern_name},
            stimulus={"reference_c": trial["reference_c"],
                      "test_c": trial["test_c"],
                      "delta_c": trial["delta_c"]},
            response=response,
            response_time_s=rt_s,
            ground_truth=None,
            timestamp_s=self.protocol_us / 1e6,
        ))
        before = len(self.st.reversal_steps)
        self.st = staircase_update(self.st_cfg, self.st, response)
        if len(self.st.reversal_steps) > before:
            run.event("reversal", {
                "trial": trial["index"],
                "count": len(self.st.reversal_steps),
                "step_c": self.st.reversal_steps[-1],
            })
        info = {
            "trial": trial["index"],
            "trial_count": self.st.trial_count,
            "reversal_count": len(self.st.reversal_steps),
            "condition_finished": self.st.finished,
        }
        if self.st.finished:
            self.summary_conditions.append({
                "polarity": self.polarity,
                "pattern": self.pattern_name,
                "jnd_c": jnd_estimate(self.st_cfg, self.st),
                "trials": self.st.trial_count,
                "reversals": list(self.st.reversal_steps),
            })
            self._set_phase("pause", 1.0)
        else:
            self._start_trial()
        return info

    # -- snapshot ---------------------------------------------------------

    def status(self) -> dict:
        return {
            "phase": self.phase,
            "trial_index": None if self.trial is None else self.trial["index"],
            "condition": {"polarity": self.polarity,
                          "pattern": self.pattern_name},
            "conditions_done": len(self.summary_conditions),
            "conditions_total": len(self.conditions),
            "trial_count": self.st.trial_count,
            "reversal_count": len(self.st.reversal_steps),
            "accepts_response": (self.phase == "awaiting"
                                 or (self.phase == "test"
                                     and self.pending is None)),
        }


def _single_pattern_stream(p: Pattern, hold_s: float) -> SetpointStream:
    seg = np.zeros((1, N_CELLS))
    seg[0, p.mask()] = p.offset_c
    return SetpointStream(times_s=(0.0,), offsets_c=seg, duration_s=hold_s)


class DeviceService:
    """Owns the device, the control thread, sessions, and the fan-out."""

    def __init__(self, settings: ServiceSettings):
        self.settings = settings
        self.out_root = Path(settings.out_dir)
        self.out_root.mkdir(parents=True, exist_ok=True)
        if settings.calibration_path is not None:
            record = CalibrationRecord.from_json(
                json.loads(Path(settings.calibration_path).read_text()))
        else:
            record = load_default_calibration()
        self._record = record
        self.device = device_from_record(
            record, noise_seed=settings.seed,
            cfg=DeviceConfig(ambient_temp_c=settings.ambient_c))
        self._period = self.device.backend.dt
        self._stride = max(1, round(1.0 / (settings.telemetry_hz
                                           * self._period)))
        self._commands: queue.Queue[tuple[Callable, Future]] = queue.Queue()
        self._subs: list[_Subscriber] = []
        self._runner: SessionRunner | None = None
        self._machine: _InteractiveStaircase | None = None
        self._pending_config: SessionConfig | None = None
        self._session_counter = 0
        self._session_dir: Path | None = None
        self._t_ns = 0
        self._tick_ns = round(self._period * 1e9)
        self._ticks = 0
        self._lateness: deque[float] = deque(maxlen=12000)
        self._overruns = 0
        self._service_log = None
        self._last_frame = None
        self._snapshot: dict = {"status": "starting", "session": None,
                                "frame": None, "t_us": 0}
        self._stop_flag = threading.Event()
        self._thread = threading.Thread(target=self._run, daemon=True,
                                        name="palmtherm-control")

    # -- lifecycle --------------------------------------------------------

    def start(self) -> None:
        self._thread.start()

    def stop(self) -> None:
        self._stop_flag.set()
        self._thread.join(timeout=5.0)

    # -- control thread ---------------------------------------------------

    def _run(self) -> None:
        gc.collect()
        gc.freeze()   # keep startup objects out of future collections
        wall = self.settings.pace == "wall"
        deadline = time.perf_counter() + self._period
        try:
            while not self._stop_flag.is_set():
                self._drain_commands()
                if self._machine is not None:
                    self._machine.on_tick()
                    if self._machine.finished:
                        self._finalize("completed", None)
                frame = self._tick_device()
                self._t_ns += self._tick_ns
                self._last_frame = frame
                if frame.tick_index % self._stride == 0:
                    self._broadcast(_dumps({"type": "telemetry",
                                            "t_us": self.t_us,
                                            **frame.to_json()}))
                self._publish(frame)
                self._ticks += 1
                if wall:
                    deadline = self._pace(deadline)
                else:
                    time.sleep(0)   # stay responsive to handler threads
        finally:
            if self._runner is not None:
                self._finalize("aborted", "service shutdown")
            if self._service_log is not None:
                self._service_log.close()
            for sub in self._subs:
                sub.closed = True
                sub.signal.set()

    def _drain_commands(self) -> None:
        mutated = False
        while True:
            try:
                fn, fut = self._commands.get_nowait()
            except queue.Empty:
                break
            try:
                fut.set_result(fn())
                mutated = True
            except BaseException as exc:  # noqa: BLE001 - relayed to caller
                fut.set_exception(exc)
        if mutated and self._last_frame is not None:
            # republish so /state never lags an acknowledged mutation
            self._publish(self._last_frame)

    def _tick_device(self):
        if self._runner is not None:
            return self._runner.tick()
        return self.device.device_tick()

    def _pace(self, deadline: float) -> float:
        now = time.perf_counter()
        if now > deadline + self._period:
            # lost the schedule entirely; rebase instead of spiraling,
            # but keep the miss in the jitter record
            self._overruns += 1
            self._lateness.append(now - deadline)
            return now + self._period
        while True:
            remaining = deadline - now
            if remaining <= 0:
                break
            if remaining > 0.0015:
                time.sleep(remaining - 0.0015)
            now = time.perf_counter()
        self._lateness.append(now - deadline)
        return deadline + self._period

    def _publish(self, frame) -> None:
        session = None
        if self._runner is not None and self._machine is not None:
            cfg = self._runner.cfg
            session = {
                "session_id": cfg.session_id,
                "experiment": cfg.experiment,
                "participant_id": cfg.participant_id,
                "seed": cfg.seed,
                **self._machine.status(),
            }
        self._snapshot = {
            "status": "running" if session is not None else "idle",
            "session": session,
            "ambient_c": self.settings.ambient_c,
            "t_us": self.t_us,
            "frame": frame.to_json(),
        }

    @property
    def t_us(self) -> int:
        """Service clock: monotonic from boot; sessions keep their own
        zero-based clocks inside their artifacts."""
        return self._t_ns // 1000

    # -- fan-out ------------------------------------------------------------

    def _broadcast(self, item: str) -> None:
        for sub in self._subs:
            sub.push(item)

    def _emit_event(self, doc: dict) -> None:
        self._broadcast(_dumps({"type": "event", **doc}))

    def _service_event(self, kind: str, payload: dict) -> None:
        """Mutation log while no session is active."""
        if self._service_log is None:
            path = self.out_root / "service-events.jsonl"
            self._service_log = open(path, "a", encoding="utf-8")
            header = {"schema": SCHEMA, "kind": "service_events_header",
                      "seed": self.settings.seed,
                      "ambient_c": self.settings.ambient_c}
            self._service_log.write(_dumps(header) + "\n")
        doc = {"kind": kind, "t_us": self.t_us, "payload": payload}
        self._service_log.write(_dumps(doc) + "\n")
        self._service_log.flush()
        self._broadcast(_dumps({"type": "event", **doc}))
        self._service_log.flush()
        self._emit_event(doc)

    def _log_mutation(self, kind: str, payload: dict) -> None:
        if self._runner is not None:
            self._runner.event(kind, payload)
        else:
            self._service_event(kind, payload)

    # -- command helpers (run on caller threads) ----------------------------

    def _call(self, fn: Callable):
        fut: Future = Future()
        self._commands.put((fn, fut))
        return fut.result(timeout=5.0)

    def snapshot(self) -> dict:
        return {**self._snapshot, "metrics": self.jitter_stats()}

    def jitter_stats(self) -> dict:
        lateness = sorted(self._lateness)
        stats = {
            "pace": self.settings.pace,
            "tick_period_s": self._period,
            "ticks": self._ticks,
            "overruns": self._overruns,
        }
        if lateness and self.settings.pace == "wall":
            k = min(len(lateness) - 1, int(0.99 * len(lateness)))
            stats["p99_jitter_s"] = lateness[k]
            stats["max_jitter_s"] = lateness[-1]
        return stats

    def subscribe(self) -> _Subscriber:
        sub = _Subscriber(self.settings.queue_maxlen)
        self._call(lambda: self._subs.append(sub))
        return sub

    def unsubscribe(self, sub: _Subscriber) -> None:
        try:
            self._call(lambda: sub in self._subs and self._subs.remove(sub))
        except Exception:   # noqa: BLE001 - service may already be down
            pass

    # -- mutations -----------------------------------------------------------

    def play_pattern(self, name: str | None, cells: list[int] | None,
                     offset_c: float, hold_s: float) -> dict:
        if (name is None) == (cells is None):
            raise ApiError(422, "validation",
                           "provide exactly one of 'name' or 'cells'")
        if not 0 < hold_s <= 60.0:
            raise ApiError(422, "validation", "hold_s must be in (0, 60] s")
        try:
            if name is not None:
                pattern = pattern_by_name(name, offset_c)
            else:
                pattern = Pattern(name="custom", active_cells=frozenset(cells),
                                  offset_c=offset_c)
        except KeyError:
            raise ApiError(404, "not_found", f"no pattern named {name!r}")
        except ValueError as exc:
            raise ApiError(422, "validation", str(exc))
        stream = _single_pattern_stream(pattern, hold_s)

        def apply():
            if self._runner is not None:
                raise ApiError(409, "conflict",
                               "a session is active; patterns are locked")
            self.device.play(stream)
            self._log_mutation("pattern_play", {
                "name": pattern.name,
                "cells": sorted(pattern.active_cells),
                "offset_c": pattern.offset_c,
                "hold_s": hold_s,
            })
            return {"status": "playing", "pattern": pattern.to_json(),
                    "hold_s": hold_s}

        return self._call(apply)

    def configure_session(self, doc: dict) -> dict:
        cfg = self._parse_config(doc)

        def apply():
            self._pending_config = cfg
            self._log_mutation("session_configure",
                               {"session_id": cfg.session_id})
            return {"status": "configured", "session_id": cfg.session_id}

        return self._call(apply)

    def start_session(self, doc: dict | None) -> dict:
        if doc is not None:
            cfg = self._parse_config(doc)
        else:
            cfg = self._pending_config
            if cfg is None:
                raise ApiError(422, "validation",
                               "no session configuration provided")
        runner = SessionRunner(cfg)

        def apply():
            if self._runner is not None:
                raise ApiError(409, "conflict", "a session is already active")
            while True:
                self._session_counter += 1
                session_dir = (
                    self.out_root
                    / f"{self._session_counter:03d}-{cfg.session_id}")
                if not session_dir.exists():
                    break
            runner.open_artifacts(session_dir)
            runner.event_sink = self._emit_event
            (session_dir / "config.json").write_text(
                _dumps(cfg.to_json()) + "\n")
            self._runner = runner
            self._session_dir = session_dir
            self.device = runner.device
            runner.event("session_start", {"experiment": cfg.experiment})
            self._machine = _InteractiveStaircase(runner)
            return {"status": "started", "session_id": cfg.session_id,
                    "session_dir": str(session_dir)}

        return self._call(apply)

    def stop_session(self) -> dict:
        def apply():
            if self._runner is None:
                raise ApiError(409, "conflict", "no active session")
            summary = self._finalize("aborted", "stopped by operator")
            return {"status": "stopped", "summary": summary}

        return self._call(apply)

    def submit_response(self, response: str | None, rt_s: float | None,
                        questionnaire: dict | None) -> dict:
        if questionnaire is None:
            if response not in (SAME, DIFFERENT):
                raise ApiError(
                    422, "validation",
                    f"response must be '{SAME}' or '{DIFFERENT}'")
        elif response is not None:
            raise ApiError(422, "validation",
                           "send either a response or a questionnaire")

        def apply():
            if self._runner is None or self._machine is None:
                raise ApiError(409, "rejected", "no active session")
            if questionnaire is not None:
                self._runner.event("questionnaire", questionnaire)
                return {"accepted": True, "kind": "questionnaire"}
            try:
                return self._machine.submit(response, rt_s)
            except _ResponseRejected as exc:
                raise ApiError(409, "rejected", exc.reason)

        return self._call(apply)

    # -- internals (control thread only) --------------------------------------

    def _parse_config(self, doc: dict) -> SessionConfig:
        doc = dict(doc)
        doc.setdefault("schema", SCHEMA)
        doc.setdefault("kind", "session_config")
        doc["out_dir"] = str(self.out_root)
        try:
            cfg = session_config_from_json(doc)
        except SessionConfigError as exc:
            raise ApiError(422, "validation", "invalid session config",
                           detail=exc.problems)
        if cfg.experiment != "staircase":
            raise ApiError(422, "validation",
                           "only staircase sessions are interactive; run "
                           "other experiments with the session runner")
        return cfg

    def _finalize(self, status: str, error: str | None) -> dict:
        runner, machine = self._runner, self._machine
        assert runner is not None and machine is not None
        if status == "aborted" and machine.finished:
            status, error = "completed", None
        runner.event("session_end", {"status": status})
        runner.close_artifacts()
        cfg = runner.cfg
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
            "sim_duration_s": runner.t_us / 1e6,
            "results": {"conditions": machine.summary_conditions},
            "wall_clock": datetime.now(timezone.utc).isoformat(),
        }
        (self._session_dir / "summary.json").write_text(
            json.dumps(summary, sort_keys=True, indent=1) + "\n")
        self.device.set_mode(Mode.IDLE)
        self._runner = None
        self._machine = None
        self._session_dir = None
        return summary


# -- HTTP layer ---------------------------------------------------------------


class ResponseBody(BaseModel):
    response: str | None = None
    rt_s: float | None = Field(default=None, ge=0.0, le=3600.0)
    questionnaire: dict | None = None


class PlayBody(BaseModel):
    name: str | None = None
    cells: list[int] | None = None
    offset_c: float = Field(default=8.0, ge=-MAX_OFFSET_C, le=MAX_OFFSET_C)
    hold_s: float = Field(default=3.0, gt=0.0, le=60.0)


class SessionBody(BaseModel):
    action: Literal["start", "stop", "configure"]
    config: dict | None = None


def create_app(service: DeviceService) -> FastAPI:
    app = FastAPI(title="palmtherm service", docs_url=None, redoc_url=None)

    @app.exception_handler(ApiError)
    async def api_error(_req, exc: ApiError):
        return JSONResponse(status_code=exc.status_code, content=exc.body())

    @app.exception_handler(RequestValidationError)
    async def bad_request(_req, exc: RequestValidationError):
        detail = [f"{'.'.join(str(p) for p in e['loc'])}: {e['msg']}"
                  for e in exc.errors()]
        return JSONResponse(
            status_code=422,
            content={"error": {"code": "validation",
                               "message": "invalid request",
                               "detail": detail}})

    @app.get("/state")
    def state():
        return service.snapshot()

    @app.get("/patterns")
    def patterns():
        return {"patterns": [p.to_json() for p in canonical_patterns()]}

    @app.post("/patterns/play")
    def play(body: PlayBody):
        return service.play_pattern(body.name, body.cells, body.offset_c,
                                    body.hold_s)

    @app.post("/session")
    def session(body: SessionBody):
        if body.action == "start":
            return service.start_session(body.config)
        if body.action == "stop":
            return service.stop_session()
        if body.config is None:
            raise ApiError(422, "validation", "configure needs a config")
        return service.configure_session(body.config)

    @app.post("/response")
    def respond(body: ResponseBody):
        return service.submit_response(body.response, body.rt_s,
                                       body.questionnaire)

    @app.websocket("/stream")
    async def stream(ws: WebSocket):
        await ws.accept()
        sub = await run_in_threadpool(service.subscribe)
        try:
            while not sub.closed:
                batch = await run_in_threadpool(sub.wait_batch, 0.25)
                for item in batch:
                    await ws.send_text(item)
        except (WebSocketDisconnect, RuntimeError):
            pass
        finally:
            await run_in_threadpool(service.unsubscribe, sub)

    return app


def serve(settings: ServiceSettings, host: str = "127.0.0.1",
          port: int = 8732) -> None:
    """Run the service until interrupted (blocking)."""
    import uvicorn

    service = DeviceService(settings)
    service.start()
    try:
        uvicorn.run(create_app(service), host=host, port=port,
                    log_level="warning")
    finally:
        service.stop()
