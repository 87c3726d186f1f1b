"""Adaptive threshold estimation and trial protocols.

The discrimination threshold is measured with a weighted one-up
one-down staircase: the participant feels a reference stimulus followed
immediately by a test stimulus offset from it by the current step, and
reports same or different.  "Different" shrinks the step to 90%,
"same" grows it to 130%.  A response category flip is a reversal; the
run stops at a fixed reversal count and the threshold estimate is the
mean step size over the last few reversals.

The asymmetric weighting makes the procedure converge where
p(different) satisfies p*ln(0.9) + (1-p)*ln(1.3) = 0, i.e. at the
~71.3% point of the psychometric function, not at 75%; see
``convergence_probability``.

Human participants answer through the console; ``ObserverModel`` is the
synthetic stand-in (cumulative-normal psychometric function with guess
and lapse floors) that makes the machinery testable end to end.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from statistics import fmean
from typing import Callable, Mapping

from .patterns import (
    MAX_OFFSET_C,
    Pattern,
    SetpointStream,
    pattern_by_name,
    transition_schedule,
)

__all__ = [
    "SAME",
    "DIFFERENT",
    "StaircaseError",
    "StaircaseConfig",
    "StaircaseState",
    "StaircaseTrial",
    "ObserverModel",
    "TrialRecord",
    "Exp2Trial",
    "Exp3Trial",
    "convergence_probability",
    "fresh_state",
    "staircase_next_stimulus",
    "staircase_update",
    "jnd_estimate",
    "run_staircase",
    "exp2_trial_table",
    "exp3_pair_table",
    "exp3_stream",
    "trial_record_from_json",
]

SAME = "same"
DIFFERENT = "different"

_POLARITIES = ("warm", "cool")

# The six single-geometry patterns whose ordered pairs form the
# pattern-change discrimination set (rows and columns; line and all are
# reserved for the staircase and the brush).
EXP3_PATTERN_NAMES = (
    "top_row",
    "middle_row",
    "bottom_row",
    "left_column",
    "middle_column",
    "right_column",
)


class StaircaseError(RuntimeError):
    """Raised on protocol misuse: stepping a finished run, estimating an
    unfinished one."""


def convergence_probability(down_factor: float, up_factor: float) -> float:
    """Response probability at which the weighted rule is drift-free.

    The step size performs a random walk in log space; the expected log
    change is zero when p*ln(down) + (1-p)*ln(up) = 0.  For the default
    0.9/1.3 weighting this is ~0.7135.
    """
    if not 0.0 < down_factor < 1.0 < up_factor:
        raise ValueError("need 0 < down_factor < 1 < up_factor")
    return math.log(up_factor) / (math.log(up_factor) - math.log(down_factor))


@dataclass(frozen=True)
class StaircaseConfig:
    """Protocol constants for one staircase run.

    The reference sits ``reference_offset_c`` from ambient on the warm
    or cool side; the test adds the current step in the same direction.
    ``step_ceiling_c`` defaults to whatever room the safety envelope
    leaves above the reference.
    """

    polarity: str
    ambient_c: float = 30.0
    reference_offset_c: float = 4.0
    initial_step_c: float = 4.0
    down_factor: float = 0.9
    up_factor: float = 1.3
    reversals_to_stop: int = 10
    reversals_averaged: int = 8
    stimulus_duration_s: float = 3.5
    isi_s: float = 0.0
    pattern: Pattern = field(default_factory=lambda: pattern_by_name("all"))
    step_floor_c: float = 0.1
    step_ceiling_c: float | None = None

    def __post_init__(self) -> None:
        if self.polarity not in _POLARITIES:
            raise ValueError(f"polarity must be one of {_POLARITIES}")
        if not 0.0 < self.down_factor < 1.0 < self.up_factor:
            raise ValueError("need 0 < down_factor < 1 < up_factor")
        if not 1 <= self.reversals_averaged <= self.reversals_to_stop:
            raise ValueError("reversals_averaged must not exceed reversals_to_stop")
        if not 0.0 < self.reference_offset_c <= MAX_OFFSET_C:
            raise ValueError(f"reference_offset_c out of (0, {MAX_OFFSET_C}]")
        if self.step_floor_c <= 0.0:
            raise ValueError("step_floor_c must be positive")
        ceiling = self.ceiling_c
        if ceiling < self.step_floor_c:
            raise ValueError("step ceiling below step floor")
        if not self.step_floor_c <= self.initial_step_c <= ceiling:
            raise ValueError(
                f"initial_step_c must lie in [{self.step_floor_c}, {ceiling}]"
            )
        if self.stimulus_duration_s <= 0.0 or self.isi_s < 0.0:
            raise ValueError("bad stimulus timing")
        if not isinstance(self.pattern, Pattern):
            raise TypeError("pattern must be a Pattern")

    @property
    def ceiling_c(self) -> float:
        """Largest deliverable step: test must stay inside the envelope."""
        if self.step_ceiling_c is not None:
            return self.step_ceiling_c
        return MAX_OFFSET_C - self.reference_offset_c

    @property
    def sign(self) -> int:
        return 1 if self.polarity == "warm" else -1


@dataclass(frozen=True)
class StaircaseState:
    """Trajectory of one run; advanced functionally by staircase_update."""

    current_step_c: float
    trial_count: int = 0
    last_response: str | None = None
    reversal_steps: tuple[float, ...] = ()
    finished: bool = False


def fresh_state(cfg: StaircaseConfig) -> StaircaseState:
    return StaircaseState(current_step_c=cfg.initial_step_c)


def staircase_next_stimulus(
    cfg: StaircaseConfig, st: StaircaseState
) -> tuple[float, float]:
    """Reference and test temperatures for the upcoming trial, in degC."""
    if st.finished:
        raise StaircaseError("staircase already finished")
    reference = cfg.ambient_c + cfg.sign * cfg.reference_offset_c
    test = reference + cfg.sign * st.current_step_c
    return reference, test


def staircase_update(
    cfg: StaircaseConfig, st: StaircaseState, response: str
) -> StaircaseState:
    """Fold one same/different response into the run.

    A reversal is recorded when the response category differs from the
    previous trial's; the step presented on the flip trial is what gets
    stored.  The first trial can never be a reversal.
    """
    if st.finished:
        raise StaircaseError("staircase already finished")
    if response not in (SAME, DIFFERENT):
        raise ValueError(f"response must be '{SAME}' or '{DIFFERENT}'")

    reversals = st.reversal_steps
    if st.last_response is not None and response != st.last_response:
        reversals = reversals + (st.current_step_c,)
    finished = len(reversals) >= cfg.reversals_to_stop

    factor = cfg.down_factor if response == DIFFERENT else cfg.up_factor
    step = min(max(st.current_step_c * factor, cfg.step_floor_c), cfg.ceiling_c)

    return StaircaseState(
        current_step_c=step,
        trial_count=st.trial_count + 1,
        last_response=response,
        reversal_steps=reversals,
        finished=finished,
    )


def jnd_estimate(cfg: StaircaseConfig, st: StaircaseState) -> float:
    """Mean step size over the last ``reversals_averaged`` reversals."""
    if not st.finished:
        raise StaircaseError("staircase still running")
    return fmean(st.reversal_steps[-cfg.reversals_averaged :])


class ObserverModel:
    """Synthetic participant for closed-loop verification.

    p(different | delta) = guess + (1 - guess - lapse) * Phi((delta - mu)
    / sigma).  ``slope_sigma = 0`` is the deterministic-threshold limit:
    always different above ``threshold_mu``, never below, a fair coin
    exactly at it.  Responses are sampled from a private seeded stream
    so runs replay bit-identically.
    """

    def __init__(
        self,
        threshold_mu: float,
        slope_sigma: float = 0.8,
        lapse_rate: float = 0.0,
        guess_rate: float = 0.0,
        seed: int = 0,
    ) -> None:
        if threshold_mu <= 0.0:
            raise ValueError("threshold_mu must be positive")
        if slope_sigma < 0.0:
            raise ValueError("slope_sigma must be non-negative")
        for name, rate in (("lapse_rate", lapse_rate), ("guess_rate", guess_rate)):
            if not 0.0 <= rate <= 0.1:
                raise ValueError(f"{name} must lie in [0, 0.1]")
        self.threshold_mu = threshold_mu
        self.slope_sigma = slope_sigma
        self.lapse_rate = lapse_rate
        self.guess_rate = guess_rate
        self.seed = seed
        self._rng = random.Random(seed)

    def p_different(self, delta_c: float) -> float:
        if delta_c < 0.0:
            raise ValueError("delta_c must be non-negative")
        if self.slope_sigma == 0.0:
            if delta_c > self.threshold_mu:
                core = 1.0
            elif delta_c < self.threshold_mu:
                core = 0.0
            else:
                core = 0.5
        else:
            z = (delta_c - self.threshold_mu) / self.slope_sigma
            core = 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))
        return self.guess_rate + (1.0 - self.guess_rate - self.lapse_rate) * core

    def respond(self, delta_c: float) -> str:
        return DIFFERENT if self._rng.random() < self.p_different(delta_c) else SAME


@dataclass(frozen=True)
class StaircaseTrial:
    """One presented trial, for logging and plotting."""

    trial_index: int
    reference_c: float
    test_c: float
    delta_c: float
    response: str


def run_staircase(
    cfg: StaircaseConfig,
    respond: ObserverModel | Callable[[float], str],
    max_trials: int = 1000,
) -> tuple[StaircaseState, tuple[StaircaseTrial, ...]]:
    """Drive a staircase to completion against a response source.

    ``respond`` is an ObserverModel or any callable mapping the trial's
    step size (degC) to "same"/"different".  Raises StaircaseError if
    the run has not finished after ``max_trials`` trials (possible only
    for degenerate response sources that never flip).
    """
    answer = respond.respond if isinstance(respond, ObserverModel) else respond
    st = fresh_state(cfg)
    trials: list[StaircaseTrial] = []
    while not st.finished:
        if st.trial_count >= max_trials:
            raise StaircaseError(f"no convergence after {max_trials} trials")
        reference, test = staircase_next_stimulus(cfg, st)
        delta = st.current_step_c
        response = answer(delta)
        trials.append(
            StaircaseTrial(st.trial_count, reference, test, delta, response)
        )
        st = staircase_update(cfg, st, response)
    return st, tuple(trials)


# --- trial tables for the matching and pattern-change protocols -------

@dataclass(frozen=True)
class Exp2Trial:
    """One real-vs-virtual matching trial.

    ``presentation`` says whether the comparison surface is a physical
    object ("real") or the device rendering it ("virtual");
    ``ground_truth`` is whether the two temperatures actually differed.
    """

    trial_index: int
    presentation: str
    polarity: str
    t_reference_c: float
    t_comparison_c: float
    ground_truth: str


def exp2_trial_table(
    seed: int,
    repetitions: int = 10,
    delta_c: float = 4.0,
    base_offset_c: float = 8.0,
    ambient_c: float = 30.0,
) -> tuple[Exp2Trial, ...]:
    """Balanced, seeded trial table for the temperature-matching study.

    Four condition cells ({real, virtual} x {warm, cool}) each appear
    ``repetitions`` times, half with equal reference/comparison
    temperatures and half differing by ``delta_c`` (direction
    alternating).  The published design leaves the per-trial deltas
    unspecified, so they are parameters here, not constants.
    """
    if repetitions < 2 or repetitions % 2 != 0:
        raise ValueError("repetitions must be even and at least 2")
    if delta_c <= 0.0:
        raise ValueError("delta_c must be positive")
    if base_offset_c + delta_c > MAX_OFFSET_C:
        raise ValueError("base offset plus delta exceeds the safety envelope")

    rows: list[tuple[str, str, float, float, str]] = []
    for presentation in ("real", "virtual"):
        for polarity in _POLARITIES:
            sign = 1 if polarity == "warm" else -1
            base = ambient_c + sign * base_offset_c
            for k in range(repetitions):
                if k < repetitions // 2:
                    comparison, truth = base, SAME
                else:
                    # Alternate the delta direction within each cell.
                    direction = 1 if k % 2 == 0 else -1
                    comparison, truth = base + direction * delta_c, DIFFERENT
                rows.append((presentation, polarity, base, comparison, truth))

    rng = random.Random(seed)
    rng.shuffle(rows)
    return tuple(
        Exp2Trial(i, pres, pol, ref, comp, truth)
        for i, (pres, pol, ref, comp, truth) in enumerate(rows)
    )


@dataclass(frozen=True)
class Exp3Trial:
    """One pattern-change trial: first pattern held, then the second."""

    trial_index: int
    polarity: str
    first: str
    second: str
    changed: bool
    offset_c: float


def exp3_pair_table(
    seed: int,
    catch_per_polarity: int = 6,
    offset_magnitude_c: float = 8.0,
) -> tuple[Exp3Trial, ...]:
    """Seeded table of ordered pattern pairs for change detection.

    Every ordered pair of the six row/column patterns appears exactly
    once per polarity (30 changed pairs), plus ``catch_per_polarity``
    same-pattern catch trials drawn round-robin from the set.  The
    published protocol implies catch trials existed but not their
    share; the default is one catch per six trials.
    """
    if catch_per_polarity < 0:
        raise ValueError("catch_per_polarity must be non-negative")
    if not 0.0 < offset_magnitude_c <= MAX_OFFSET_C:
        raise ValueError(f"offset_magnitude_c out of (0, {MAX_OFFSET_C}]")

    rows: list[tuple[str, str, str, bool, float]] = []
    for polarity in _POLARITIES:
        offset = offset_magnitude_c if polarity == "warm" else -offset_magnitude_c
        for a in EXP3_PATTERN_NAMES:
            for b in EXP3_PATTERN_NAMES:
                if a != b:
                    rows.append((polarity, a, b, True, offset))
        for k in range(catch_per_polarity):
            name = EXP3_PATTERN_NAMES[k % len(EXP3_PATTERN_NAMES)]
            rows.append((polarity, name, name, False, offset))

    rng = random.Random(seed)
    rng.shuffle(rows)
    return tuple(
        Exp3Trial(i, pol, a, b, changed, off)
        for i, (pol, a, b, changed, off) in enumerate(rows)
    )


def exp3_stream(trial: Exp3Trial, hold_s: float = 3.0) -> SetpointStream:
    """Compile a pattern-change trial to its two-segment setpoint stream."""
    first = pattern_by_name(trial.first, trial.offset_c)
    second = pattern_by_name(trial.second, trial.offset_c)
    return transition_schedule(first, second, hold_s=hold_s)


# --- trial logging -----------------------------------------------------

_TRIAL_FIELDS = {
    "schema",
    "kind",
    "session_id",
    "participant_id",
    "experiment",
    "trial_index",
    "condition",
    "stimulus",
    "response",
    "response_time_s",
    "ground_truth",
    "timestamp_s",
}


@dataclass(frozen=True)
class TrialRecord:
    """Append-only log row shared by every protocol.

    ``condition`` and ``stimulus`` are flat string-keyed mappings whose
    keys differ per experiment; the envelope fields are fixed so logs
    from different protocols concatenate cleanly.
    """

    session_id: str
    participant_id: str
    experiment: str
    trial_index: int
    condition: Mapping[str, object]
    stimulus: Mapping[str, object]
    response: str | None
    response_time_s: float | None
    ground_truth: str | None
    timestamp_s: float

    def to_json(self) -> dict:
        return {
            "schema": 1,
            "kind": "trial",
            "session_id": self.session_id,
            "participant_id": self.participant_id,
            "experiment": self.experiment,
            "trial_index": self.trial_index,
            "condition": dict(self.condition),
            "stimulus": dict(self.stimulus),
            "response": self.response,
            "response_time_s": self.response_time_s,
            "ground_truth": self.ground_truth,
            "timestamp_s": self.timestamp_s,
        }


def trial_record_from_json(doc: Mapping[str, object]) -> TrialRecord:
    unknown = set(doc) - _TRIAL_FIELDS
    if unknown:
        raise ValueError(f"unknown trial fields: {sorted(unknown)}")
    if doc.get("schema") != 1:
        raise ValueError(f"unsupported trial schema: {doc.get('schema')!r}")
    if doc.get("kind") != "trial":
        raise ValueError(f"not a trial document: kind={doc.get('kind')!r}")
    missing = _TRIAL_FIELDS - set(doc)
    if missing:
        raise ValueError(f"missing trial fields: {sorted(missing)}")
    return TrialRecord(
        session_id=str(doc["session_id"]),
        participant_id=str(doc["participant_id"]),
        experiment=str(doc["experiment"]),
        trial_index=int(doc["trial_index"]),  # type: ignore[arg-type]
        condition=dict(doc["condition"]),  # type: ignore[arg-type]
        stimulus=dict(doc["stimulus"]),  # type: ignore[arg-type]
        response=None if doc["response"] is None else str(doc["response"]),
        response_time_s=(
            None if doc["response_time_s"] is None else float(doc["response_time_s"])  # type: ignore[arg-type]
        ),
        ground_truth=(
            None if doc["ground_truth"] is None else str(doc["ground_truth"])
        ),
        timestamp_s=float(doc["timestamp_s"]),  # type: ignore[arg-type]
    )
