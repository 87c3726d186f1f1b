"""Device abstraction for the 3x3 thermal array.

Cell indexing is row-major with cell 0 at the top-left when the device
is viewed palm-side (palm facing down onto the array):

        columns:  left  mid  right
    top row        0     1     2     (toward finger bases)
    middle row     3     4     5
    bottom row     6     7     8     (thenar / base of palm)

A ThermalDevice owns one backend (simulated plant, or the serial
loopback stub that exercises the wire codec) and advances it one
control tick at a time: read sensors, derive setpoints for the current
mode, run the per-channel PID, drive, advance, publish telemetry.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .calibrate import load_default_calibration
from .control import ControllerState, PidGains, pid_step
from .framing import SerialFrame, serial_frame_decode, serial_frame_encode
from .loop import DEFAULT_TICK_HZ
from .plant import (
    ArrayPlant,
    N_CELLS,
    PlantState,
    initial_state,
    plant_step,
    uniform_channels,
)

ROW_LABELS = ("finger bases", "mid palm", "thenar / base of palm")


class Mode(str, enum.Enum):
    IDLE = "idle"
    DIRECT = "direct"
    PASSTHROUGH = "passthrough"
    PATTERN = "pattern"


@dataclass(frozen=True)
class ArrayGeometry:
    rows: int = 3
    cols: int = 3
    cell_size_mm: float = 6.5
    pitch_mm: float = 18.0

    def __post_init__(self):
        if self.rows * self.cols != N_CELLS:
            raise ValueError("geometry must describe 9 cells")
        if self.pitch_mm <= self.cell_size_mm:
            raise ValueError("pitch must exceed cell size")

    def cell_index(self, row: int, col: int) -> int:
        if not (0 <= row < self.rows and 0 <= col < self.cols):
            raise ValueError("row/col out of range")
        return row * self.cols + col

    def region_label(self, cell: int) -> str:
        if not 0 <= cell < N_CELLS:
            raise ValueError("cell out of range")
        return ROW_LABELS[cell // self.cols]


@dataclass(frozen=True)
class DeviceConfig:
    ambient_temp_c: float = 30.0
    safety_envelope_c: float = 15.0
    backend: str = "sim"
    telemetry_rate_hz: float = DEFAULT_TICK_HZ

    def __post_init__(self):
        if not 25.0 <= self.ambient_temp_c <= 36.0:
            raise ValueError("ambient must lie in [25, 36] C")
        if not 0.0 < self.safety_envelope_c <= 15.0:
            raise ValueError("safety envelope must lie in (0, 15] C")
        if self.backend not in ("sim", "serial"):
            raise ValueError("backend must be 'sim' or 'serial'")
        if self.telemetry_rate_hz <= 0:
            raise ValueError("telemetry rate must be positive")


@dataclass(frozen=True)
class ArrayFrame:
    """One tick of device telemetry."""

    tick_index: int
    setpoints: tuple[float, ...]
    measured: tuple[float, ...]
    currents: tuple[float, ...]
    external: tuple[float, ...]
    mode: Mode
    clamp_count: int = 0
    warnings: tuple[str, ...] = ()
    fault: bool = False

    def to_json(self) -> dict:
        return {
            "tick": self.tick_index,
            "setpoints": list(self.setpoints),
            "measured": [m if math.isfinite(m) else None
                         for m in self.measured],
            "currents": list(self.currents),
            "external": list(self.external),
            "mode": self.mode.value,
            "clamp_count": self.clamp_count,
            "warnings": list(self.warnings),
            "fault": self.fault,
        }


class BackendError(RuntimeError):
    """The backend stopped responding; the device falls back to idle."""


def clamp_setpoints(raw: np.ndarray, cfg: DeviceConfig) -> np.ndarray:
    """Clamp each setpoint into [ambient - envelope, ambient + envelope]."""
    lo = cfg.ambient_temp_c - cfg.safety_envelope_c
    hi = cfg.ambient_temp_c + cfg.safety_envelope_c
    return np.clip(np.asarray(raw, dtype=float), lo, hi)


def passthrough_map(external: np.ndarray, cfg: DeviceConfig,
                    smoothing_tau: float = 0.0, dt: float = 0.01,
                    prev: np.ndarray | None = None,
                    ) -> tuple[np.ndarray, list[int]]:
    """Map external surface readings one-to-one onto cell setpoints.

    Optional first-order smoothing toward each reading (tau=0 tracks
    instantly), then the safety clamp. Non-finite readings drop that
    cell to ambient; the returned list names the dropped cells so the
    caller can raise a telemetry warning.
    """
    if smoothing_tau < 0 or dt <= 0:
        raise ValueError("smoothing_tau must be >= 0 and dt > 0")
    ext = np.asarray(external, dtype=float)
    if ext.shape != (N_CELLS,):
        raise ValueError(f"external must have shape ({N_CELLS},)")
    bad = [int(k) for k in np.nonzero(~np.isfinite(ext))[0]]
    target = ext.copy()
    target[~np.isfinite(ext)] = cfg.ambient_temp_c
    if smoothing_tau == 0.0 or prev is None:
        raw = target
    else:
        coef = 1.0 - math.exp(-dt / smoothing_tau)
        raw = np.asarray(prev, dtype=float) + coef * (target - prev)
    return clamp_setpoints(raw, cfg), bad


class SimBackend:
    """Simulated plant behind the device interface."""

    def __init__(self, plant: ArrayPlant, ambient_c: float = 30.0,
                 tick_hz: float = DEFAULT_TICK_HZ,
                 noise_seed: int | None = None):
        self.plant = plant
        self.dt = 1.0 / tick_hz
        self.state: PlantState = initial_state(plant, ambient_c)
        self._rng = (np.random.default_rng(noise_seed)
                     if noise_seed is not None else None)
        self._faulted: set[int] = set()
        self._connected = True

    @property
    def i_max(self) -> float:
        return self.plant.tem.i_max

    def inject_sensor_fault(self, cell: int, on: bool = True) -> None:
        if not 0 <= cell < N_CELLS:
            raise ValueError("cell out of range")
        (self._faulted.add if on else self._faulted.discard)(cell)

    def disconnect(self) -> None:
        self._connected = False

    def _check(self):
        if not self._connected:
            raise BackendError("backend disconnected")

    def read_sensors(self) -> np.ndarray:
        self._check()
        out = self.state.t_sensor.copy()
        if self._rng is not None:
            sigma = self.plant.channels[0].sensor_noise_sigma
            out += sigma * self._rng.standard_normal(N_CELLS)
        for k in self._faulted:
            out[k] = np.nan
        return out

    def apply(self, currents: np.ndarray) -> None:
        self._check()
        self.state = plant_step(self.state, currents, self.plant, self.dt)


class SerialLoopbackBackend:
    """Serial stub: every tick crosses the wire format both ways.

    Commands and telemetry are pushed through serial_frame_encode /
    serial_frame_decode, so readings come back quantized to the s16
    lattice exactly as they would from real firmware.
    """

    def __init__(self, inner: SimBackend):
        self.inner = inner
        self.dt = inner.dt
        self._tick = 0
        self.last_command: bytes | None = None
        self.last_telemetry: bytes | None = None

    @property
    def i_max(self) -> float:
        return self.inner.i_max

    def inject_sensor_fault(self, cell: int, on: bool = True) -> None:
        self.inner.inject_sensor_fault(cell, on)

    def disconnect(self) -> None:
        self.inner.disconnect()

    def read_sensors(self) -> np.ndarray:
        raw = self.inner.read_sensors()
        safe = np.nan_to_num(raw, nan=0.0)
        frame = SerialFrame(tick=self._tick & 0xFFFFFFFF,
                            setpoints_c=(0.0,) * N_CELLS,
                            measured_c=tuple(float(v) for v in safe),
                            currents_a=(0.0,) * N_CELLS)
        self.last_telemetry = serial_frame_encode(frame)
        decoded = serial_frame_decode(self.last_telemetry)
        out = np.array(decoded.measured_c)
        out[~np.isfinite(raw)] = np.nan
        return out

    def apply(self, currents: np.ndarray) -> None:
        frame = SerialFrame(tick=self._tick & 0xFFFFFFFF,
                            setpoints_c=(0.0,) * N_CELLS,
                            measured_c=(0.0,) * N_CELLS,
                            currents_a=tuple(float(i) for i in currents))
        self.last_command = serial_frame_encode(frame)
        decoded = serial_frame_decode(self.last_command)
        self._tick += 1
        self.inner.apply(np.array(decoded.currents_a))


class ThermalDevice:
    """Mode-driven controller wrapper around one backend."""

    def __init__(self, backend, gains: PidGains,
                 cfg: DeviceConfig | None = None,
                 geometry: ArrayGeometry | None = None):
        self.backend = backend
        self.gains = gains
        self.cfg = cfg or DeviceConfig()
        self.geometry = geometry or ArrayGeometry()
        self.mode = Mode.IDLE
        self.tick_index = 0
        self.smoothing_tau = 0.0
        self._controllers = [ControllerState() for _ in range(N_CELLS)]
        self._direct = np.full(N_CELLS, self.cfg.ambient_temp_c)
        self._external = np.full(N_CELLS, self.cfg.ambient_temp_c)
        self._prev_setpoints = np.full(N_CELLS, self.cfg.ambient_temp_c)
        self._pattern = None
        self._pattern_t0: int = 0
        self._listeners: list = []
        self.last_frame: ArrayFrame | None = None

    # -- commands (serialized by the owner of the tick loop) ---------------

    def add_listener(self, fn) -> None:
        self._listeners.append(fn)

    def set_mode(self, mode: Mode | str) -> None:
        self.mode = Mode(mode)
        if self.mode is Mode.IDLE:
            self._reset_controllers()

    def set_direct_setpoints(self, setpoints) -> None:
        sp = np.asarray(setpoints, dtype=float)
        if sp.shape != (N_CELLS,):
            raise ValueError(f"setpoints must have shape ({N_CELLS},)")
        if not np.all(np.isfinite(sp)):
            raise ValueError("setpoints must be finite")
        self._direct = sp.copy()
        self.mode = Mode.DIRECT

    def set_external(self, external) -> None:
        ext = np.asarray(external, dtype=float)
        if ext.shape != (N_CELLS,):
            raise ValueError(f"external must have shape ({N_CELLS},)")
        self._external = ext.copy()

    def play(self, stream) -> None:
        """Start a timed setpoint stream (offsets_at(t) plus duration_s)."""
        self._pattern = stream
        self._pattern_t0 = self.tick_index
        self.mode = Mode.PATTERN

    def _reset_controllers(self) -> None:
        self._controllers = [ControllerState() for _ in range(N_CELLS)]

    # -- the control tick ---------------------------------------------------

    def _derive_raw_setpoints(self) -> tuple[np.ndarray, list[str]]:
        amb = self.cfg.ambient_temp_c
        warnings: list[str] = []
        if self.mode is Mode.IDLE:
            return np.full(N_CELLS, amb), warnings
        if self.mode is Mode.DIRECT:
            return self._direct.copy(), warnings
        if self.mode is Mode.PASSTHROUGH:
            sp, bad = passthrough_map(self._external, self.cfg,
                                      self.smoothing_tau, self.backend.dt,
                                      self._prev_setpoints)
            for k in bad:
                warnings.append(f"external reading invalid on cell {k}; "
                                "holding ambient")
            return sp, warnings
        t_rel = (self.tick_index - self._pattern_t0) * self.backend.dt
        if self._pattern is None or t_rel >= self._pattern.duration_s:
            self._pattern = None
            self.mode = Mode.IDLE
            return np.full(N_CELLS, amb), warnings
        return amb + np.asarray(self._pattern.offsets_at(t_rel),
                                dtype=float), warnings

    def device_tick(self) -> ArrayFrame:
        """Advance one control tick and publish the resulting frame."""
        try:
            measured = self.backend.read_sensors()
        except BackendError as exc:
            self.mode = Mode.IDLE
            self._reset_controllers()
            frame = ArrayFrame(
                tick_index=self.tick_index,
                setpoints=(self.cfg.ambient_temp_c,) * N_CELLS,
                measured=(math.nan,) * N_CELLS,
                currents=(0.0,) * N_CELLS,
                external=tuple(self._external),
                mode=self.mode, warnings=(f"backend fault: {exc}",),
                fault=True)
            self._publish(frame)
            return frame

        raw, warnings = self._derive_raw_setpoints()
        setpoints = clamp_setpoints(raw, self.cfg)
        clamp_count = int(np.count_nonzero(setpoints != raw))

        currents = np.zeros(N_CELLS)
        i_cap = self.backend.i_max
        for k in range(N_CELLS):
            if not math.isfinite(measured[k]):
                setpoints[k] = self.cfg.ambient_temp_c
                self._controllers[k] = ControllerState()
                warnings.append(f"sensor fault on cell {k}; channel idled")
                continue
            u, state, _ = pid_step(self.gains, self._controllers[k],
                                   setpoints[k], measured[k],
                                   self.backend.dt)
            self._controllers[k] = state
            currents[k] = max(-i_cap, min(i_cap, u))

        self.backend.apply(currents)
        self._prev_setpoints = setpoints.copy()
        self.tick_index += 1
        frame = ArrayFrame(
            tick_index=self.tick_index - 1,
            setpoints=tuple(float(v) for v in setpoints),
            measured=tuple(float(v) for v in measured),
            currents=tuple(float(v) for v in currents),
            external=tuple(float(v) for v in self._external),
            mode=self.mode,
            clamp_count=clamp_count,
            warnings=tuple(warnings))
        self._publish(frame)
        return frame

    def run_ticks(self, n: int) -> ArrayFrame:
        for _ in range(n):
            frame = self.device_tick()
        return frame

    def _publish(self, frame: ArrayFrame) -> None:
        self.last_frame = frame
        for fn in self._listeners:
            fn(frame)


def device_from_record(rec, noise_seed: int | None = None,
                       cfg: DeviceConfig | None = None,
                       skin_spread: float = 0.0,
                       spread_seed: int = 0) -> ThermalDevice:
    """Device over a calibration record; optionally per-cell spread."""
    from .plant import with_skin_spread

    cfg = cfg or DeviceConfig()
    channels = (with_skin_spread(rec.model, skin_spread, seed=spread_seed)
                if skin_spread > 0 else uniform_channels(rec.model))
    plant = ArrayPlant(channels=channels, tem=rec.tem, coolant=rec.coolant)
    sim = SimBackend(plant, ambient_c=cfg.ambient_temp_c,
                     noise_seed=noise_seed)
    backend = SerialLoopbackBackend(sim) if cfg.backend == "serial" else sim
    return ThermalDevice(backend, rec.gains, cfg)


def default_device(noise_seed: int | None = None,
                   cfg: DeviceConfig | None = None,
                   skin_spread: float = 0.0,
                   spread_seed: int = 0) -> ThermalDevice:
    """Device over the packaged calibration; optionally per-cell spread."""
    return device_from_record(load_default_calibration(), noise_seed, cfg,
                              skin_spread, spread_seed)
