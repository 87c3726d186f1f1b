"""Spatial thermal patterns, timed transitions, and moving-source schedules.

A pattern names a set of active cells and a signed temperature offset
from ambient. Schedules compile to SetpointStream values: immutable,
piecewise-constant offset tables the device samples once per control
tick, so all timing quantization happens in one place (and stays below
one tick by construction).
"""

from __future__ import annotations

import json
from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources

import numpy as np

from .device import ArrayGeometry
from .plant import N_CELLS

MAX_OFFSET_C = 15.0  # matches the device safety envelope


@dataclass(frozen=True)
class Pattern:
    name: str
    active_cells: frozenset[int]
    offset_c: float

    def __post_init__(self):
        object.__setattr__(self, "active_cells",
                           frozenset(int(c) for c in self.active_cells))
        bad = [c for c in self.active_cells if not 0 <= c < N_CELLS]
        if bad:
            raise ValueError(
                f"active_cells out of range [0, {N_CELLS}): {sorted(bad)}")
        if abs(self.offset_c) > MAX_OFFSET_C:
            raise ValueError(f"offset_c exceeds the {MAX_OFFSET_C} C envelope")
        if not self.name:
            raise ValueError("pattern needs a name")

    def mask(self) -> np.ndarray:
        m = np.zeros(N_CELLS, dtype=bool)
        m[sorted(self.active_cells)] = True
        return m

    def to_json(self) -> dict:
        return {"schema": 1, "kind": "pattern", "name": self.name,
                "active_cells": sorted(self.active_cells),
                "offset_c": self.offset_c}


def canonical_patterns(offset_c: float = 8.0) -> list[Pattern]:
    """The six row/column patterns plus Line (bottom row) and All.

    Row-major indexing, cell 0 top-left (see device module diagram).
    """
    rows = {f"{n}_row": frozenset(range(3 * r, 3 * r + 3))
            for r, n in enumerate(("top", "middle", "bottom"))}
    cols = {f"{n}_column": frozenset({c, c + 3, c + 6})
            for c, n in enumerate(("left", "middle", "right"))}
    named = dict(rows)
    named.update(cols)
    named["line"] = frozenset({6, 7, 8})
    named["all"] = frozenset(range(N_CELLS))
    return [Pattern(name=k, active_cells=v, offset_c=offset_c)
            for k, v in named.items()]


def pattern_by_name(name: str, offset_c: float = 8.0) -> Pattern:
    for p in canonical_patterns(offset_c):
        if p.name == name:
            return p
    raise KeyError(f"no canonical pattern named {name!r}")


@dataclass(frozen=True)
class SetpointStream:
    """Piecewise-constant per-cell offsets; ambient outside [0, duration)."""

    times_s: tuple[float, ...]        # segment start times, first is 0.0
    offsets_c: np.ndarray             # (n_segments, N_CELLS)
    duration_s: float

    def __post_init__(self):
        off = np.asarray(self.offsets_c, dtype=float)
        object.__setattr__(self, "offsets_c", off)
        object.__setattr__(self, "times_s", tuple(float(t)
                                                  for t in self.times_s))
        if off.ndim != 2 or off.shape != (len(self.times_s), N_CELLS):
            raise ValueError("offsets_c must be (n_segments, 9)")
        if not self.times_s or self.times_s[0] != 0.0:
            raise ValueError("first segment must start at t=0")
        if any(b <= a for a, b in zip(self.times_s, self.times_s[1:])):
            raise ValueError("segment times must increase")
        if self.duration_s <= self.times_s[-1]:
            raise ValueError("duration must exceed the last segment start")
        if np.abs(off).max(initial=0.0) > MAX_OFFSET_C:
            raise ValueError("stream exceeds the safety envelope")

    def offsets_at(self, t_s: float) -> np.ndarray:
        if t_s < 0.0 or t_s >= self.duration_s:
            return np.zeros(N_CELLS)
        return self.offsets_c[bisect_right(self.times_s, t_s) - 1].copy()

    def tick_table(self, tick_hz: float) -> np.ndarray:
        """Offsets sampled at tick starts; shape (ceil(duration*hz), 9)."""
        n = int(np.ceil(self.duration_s * tick_hz - 1e-9))
        dt = 1.0 / tick_hz
        return np.stack([self.offsets_at(k * dt) for k in range(n)])


def transition_schedule(a: Pattern, b: Pattern, hold_s: float = 3.0,
                        offset_c: float | None = None) -> SetpointStream:
    """a's cells held at ambient+offset for hold_s, then b's for hold_s.

    Cells in both patterns stay active across the boundary (no dip to
    ambient mid-trial); everything returns to ambient at 2*hold_s.
    """
    if hold_s <= 0:
        raise ValueError("hold_s must be positive")
    off = a.offset_c if offset_c is None else float(offset_c)
    if abs(off) > MAX_OFFSET_C:
        raise ValueError(f"offset outside the {MAX_OFFSET_C} C envelope")
    seg = np.zeros((2, N_CELLS))
    seg[0, a.mask()] = off
    seg[1, b.mask()] = off
    return SetpointStream(times_s=(0.0, hold_s), offsets_c=seg,
                          duration_s=2.0 * hold_s)


@dataclass(frozen=True)
class BrushEvent:
    time_s: Fraction
    cell: int
    offset_c: float
    duration_s: Fraction

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ValueError("event duration must be positive")
        if not 0 <= self.cell < N_CELLS:
            raise ValueError("cell out of range")


@dataclass(frozen=True)
class BrushSchedule:
    """Sequential cell activations along a straight row path."""

    events: tuple[BrushEvent, ...]
    path_row: int
    velocity_m_per_s: float
    pitch_mm: float
    offset_c: float
    dwell_factor: float

    def __post_init__(self):
        times = [e.time_s for e in self.events]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("event times must be strictly increasing")

    @property
    def inter_onset_s(self) -> Fraction:
        """Exact pitch/velocity; quantization happens only in to_stream."""
        return (Fraction(self.pitch_mm) / 1000) / Fraction(str(self.velocity_m_per_s))

    def to_stream(self) -> SetpointStream:
        bounds = sorted({Fraction(0)} | {e.time_s for e in self.events}
                        | {e.time_s + e.duration_s for e in self.events})
        end = bounds[-1]
        starts = [t for t in bounds if t < end]
        seg = np.zeros((len(starts), N_CELLS))
        for i, t0 in enumerate(starts):
            for e in self.events:
                if e.time_s <= t0 < e.time_s + e.duration_s:
                    seg[i, e.cell] = e.offset_c
        return SetpointStream(times_s=tuple(float(t) for t in starts),
                              offsets_c=seg, duration_s=float(end))

    def tick_stream(self, tick_hz: float) -> SetpointStream:
        """Stream with event times snapped onto the control-tick grid.

        Onsets round to the nearest tick (error <= half a tick) and
        every event renders for at least one tick, so a dwell shorter
        than the tick period is never silently dropped. Fast schedules
        may therefore activate neighbouring cells on the same tick;
        commanded timing stays exact in the schedule itself.
        """
        if tick_hz <= 0:
            raise ValueError("tick_hz must be positive")
        dt = 1.0 / tick_hz
        snapped = []
        for e in self.events:
            on = round(e.time_s * tick_hz)
            n = max(1, round(e.duration_s * tick_hz))
            snapped.append((on, on + n, e.cell, e.offset_c))
        last = max(s[1] for s in snapped)
        starts = sorted({0} | {s[0] for s in snapped} | {s[1] for s in snapped
                                                         if s[1] < last})
        seg = np.zeros((len(starts), N_CELLS))
        for i, t0 in enumerate(starts):
            for on, end, cell, off in snapped:
                if on <= t0 < end:
                    seg[i, cell] = off
        return SetpointStream(times_s=tuple(t * dt for t in starts),
                              offsets_c=seg, duration_s=last * dt)

    def to_json(self) -> dict:
        return {"schema": 1, "kind": "brush", "path_row": self.path_row,
                "velocity_m_per_s": self.velocity_m_per_s,
                "pitch_mm": self.pitch_mm, "offset_c": self.offset_c,
                "dwell_factor": self.dwell_factor}


def brush_schedule(geometry: ArrayGeometry, velocity_m_per_s: float,
                   offset_c: float, path_row: int = 1,
                   dwell_factor: float = 1.0) -> BrushSchedule:
    """Moving-source schedule: cells along a row activate left to right.

    Onset of the k-th cell on the path is exactly k*pitch/velocity
    (rational arithmetic; floats only appear when the stream is
    compiled). Each cell stays active for one inter-onset interval by
    default; dwell_factor > 1 makes neighbours overlap. Offsets beyond
    the safety envelope are clamped, not rejected, because brush
    amplitude is a rendering hint rather than a command.
    """
    if velocity_m_per_s <= 0:
        raise ValueError("velocity must be positive")
    if not 0 <= path_row < geometry.rows:
        raise ValueError("path_row out of range")
    if dwell_factor <= 0:
        raise ValueError("dwell_factor must be positive")
    off = max(-MAX_OFFSET_C, min(MAX_OFFSET_C, float(offset_c)))
    pitch = Fraction(str(geometry.pitch_mm)) / 1000
    inter = pitch / Fraction(str(velocity_m_per_s))
    dwell = inter * Fraction(str(dwell_factor))
    events = tuple(
        BrushEvent(time_s=k * inter,
                   cell=geometry.cell_index(path_row, k),
                   offset_c=off, duration_s=dwell)
        for k in range(geometry.cols))
    return BrushSchedule(events=events, path_row=path_row,
                         velocity_m_per_s=float(velocity_m_per_s),
                         pitch_mm=float(geometry.pitch_mm), offset_c=off,
                         dwell_factor=float(dwell_factor))


# -- persistence --------------------------------------------------------------

_PATTERN_FIELDS = {"schema", "kind", "name", "active_cells", "offset_c"}
_BRUSH_FIELDS = {"schema", "kind", "path_row", "velocity_m_per_s",
                 "pitch_mm", "offset_c", "dwell_factor"}


def pattern_from_json(doc: dict) -> Pattern | BrushSchedule:
    if not isinstance(doc, dict):
        raise ValueError("pattern document must be a JSON object")
    if doc.get("schema") != 1:
        raise ValueError("unsupported schema (field 'schema')")
    kind = doc.get("kind")
    if kind == "pattern":
        extra = set(doc) - _PATTERN_FIELDS
        if extra:
            raise ValueError(f"unknown fields: {sorted(extra)}")
        missing = _PATTERN_FIELDS - set(doc)
        if missing:
            raise ValueError(f"missing fields: {sorted(missing)}")
        cells = doc["active_cells"]
        bad = [c for c in cells if not (isinstance(c, int)
                                        and 0 <= c < N_CELLS)]
        if bad:
            raise ValueError(
                f"field 'active_cells' has invalid entries: {bad}")
        return Pattern(name=doc["name"], active_cells=frozenset(cells),
                       offset_c=float(doc["offset_c"]))
    if kind == "brush":
        extra = set(doc) - _BRUSH_FIELDS
        if extra:
            raise ValueError(f"unknown fields: {sorted(extra)}")
        missing = _BRUSH_FIELDS - set(doc)
        if missing:
            raise ValueError(f"missing fields: {sorted(missing)}")
        geo = ArrayGeometry(pitch_mm=float(doc["pitch_mm"]))
        return brush_schedule(geo, float(doc["velocity_m_per_s"]),
                              float(doc["offset_c"]), int(doc["path_row"]),
                              float(doc["dwell_factor"]))
    raise ValueError(f"unknown kind {kind!r} (field 'kind')")


def pattern_file_load(path) -> Pattern | BrushSchedule:
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: not valid JSON "
                             f"(line {exc.lineno})") from exc
    try:
        return pattern_from_json(doc)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from exc


def pattern_file_save(obj: Pattern | BrushSchedule, path) -> None:
    with open(path, "w") as f:
        json.dump(obj.to_json(), f, indent=2)
        f.write("\n")


def packaged_pattern(name: str) -> Pattern:
    """Load one of the pattern fixtures shipped in the package data."""
    text = (resources.files("palmtherm") / "data" / "patterns" /
            f"{name}.json").read_text()
    obj = pattern_from_json(json.loads(text))
    if not isinstance(obj, Pattern):
        raise ValueError(f"{name} is not a plain pattern")
    return obj
