"""Staircase engine, simulated observers, and trial-table tests.

Derived constants are recomputed here by independent means: the
convergence percentile from a bisection root of the log-step drift
equation, the matched observer threshold from an erf inversion.
"""

import math
import random
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from palmtherm.patterns import pattern_by_name
from palmtherm.psychophys import (
    DIFFERENT,
    SAME,
    EXP3_PATTERN_NAMES,
    ObserverModel,
    StaircaseConfig,
    StaircaseError,
    StaircaseState,
    TrialRecord,
    convergence_probability,
    exp2_trial_table,
    exp3_pair_table,
    exp3_stream,
    fresh_state,
    jnd_estimate,
    run_staircase,
    staircase_next_stimulus,
    staircase_update,
    trial_record_from_json,
)

# --- derived-constant oracles ------------------------------------------


def drift_root() -> float:
    """Zero of p*ln(0.9) + (1-p)*ln(1.3) by bisection."""
    lo, hi = 0.0, 1.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if mid * math.log(0.9) + (1 - mid) * math.log(1.3) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def phi(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def phi_inv(p: float) -> float:
    lo, hi = -10.0, 10.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if phi(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_convergence_probability_matches_drift_root():
    p = convergence_probability(0.9, 1.3)
    assert p == pytest.approx(drift_root(), abs=1e-12)
    assert p == pytest.approx(0.7134799683015097, abs=1e-12)


def test_convergence_probability_validation():
    with pytest.raises(ValueError):
        convergence_probability(1.1, 1.3)
    with pytest.raises(ValueError):
        convergence_probability(0.9, 0.95)


# --- staircase mechanics -----------------------------------------------


def warm_cfg(**kw) -> StaircaseConfig:
    return StaircaseConfig(polarity="warm", **kw)


def test_fresh_warm_stimulus():
    cfg = warm_cfg()
    ref, test = staircase_next_stimulus(cfg, fresh_state(cfg))
    assert (ref, test) == (34.0, 38.0)


def test_fresh_cool_stimulus():
    cfg = StaircaseConfig(polarity="cool")
    ref, test = staircase_next_stimulus(cfg, fresh_state(cfg))
    assert (ref, test) == (26.0, 22.0)


def test_stimulus_tracks_current_step():
    cfg = warm_cfg()
    st = StaircaseState(current_step_c=1.0)
    assert staircase_next_stimulus(cfg, st) == (34.0, 35.0)


def test_update_factors():
    cfg = warm_cfg()
    st = fresh_state(cfg)
    assert staircase_update(cfg, st, DIFFERENT).current_step_c == pytest.approx(3.6)
    assert staircase_update(cfg, st, SAME).current_step_c == pytest.approx(5.2)


def test_first_trial_is_never_a_reversal():
    cfg = warm_cfg()
    st = staircase_update(cfg, fresh_state(cfg), DIFFERENT)
    assert st.reversal_steps == ()
    assert st.trial_count == 1
    assert st.last_response == DIFFERENT


def test_alternating_responses_finish_at_exactly_ten_reversals():
    cfg = warm_cfg()
    st = fresh_state(cfg)
    responses = [DIFFERENT, SAME] * 20
    for i, r in enumerate(responses):
        st = staircase_update(cfg, st, r)
        if st.finished:
            break
    # First trial sets the category; each of the next 10 flips reverses.
    assert st.finished
    assert len(st.reversal_steps) == 10
    assert st.trial_count == 11


def test_update_after_finish_raises():
    cfg = warm_cfg()
    st = fresh_state(cfg)
    for r in [DIFFERENT, SAME] * 6:
        if st.finished:
            break
        st = staircase_update(cfg, st, r)
    with pytest.raises(StaircaseError):
        staircase_update(cfg, st, SAME)
    with pytest.raises(StaircaseError):
        staircase_next_stimulus(cfg, st)


def test_bad_response_rejected():
    cfg = warm_cfg()
    with pytest.raises(ValueError):
        staircase_update(cfg, fresh_state(cfg), "maybe")


def test_jnd_mean_of_last_reversals():
    cfg = warm_cfg()
    done = StaircaseState(
        current_step_c=1.0, finished=True, reversal_steps=(4.0,) * 10
    )
    assert jnd_estimate(cfg, done) == 4.0
    mixed = StaircaseState(
        current_step_c=1.0,
        finished=True,
        reversal_steps=(9.0, 9.0, 2.0, 3.0, 2.0, 3.0, 2.0, 3.0, 2.0, 3.0),
    )
    # Only the last eight participate; the early 9s are burn-in.
    assert jnd_estimate(cfg, mixed) == 2.5


def test_jnd_requires_finished():
    cfg = warm_cfg()
    with pytest.raises(StaircaseError):
        jnd_estimate(cfg, fresh_state(cfg))


def test_step_floor_and_ceiling_clamp():
    cfg = warm_cfg()
    st = fresh_state(cfg)
    for _ in range(200):
        st = staircase_update(cfg, st, DIFFERENT)
    assert st.current_step_c == cfg.step_floor_c == 0.1
    st = fresh_state(cfg)
    for _ in range(200):
        st = staircase_update(cfg, st, SAME)
    # Default ceiling leaves the test stimulus inside the 15 degC envelope.
    assert st.current_step_c == cfg.ceiling_c == 11.0


def test_config_validation():
    with pytest.raises(ValueError):
        StaircaseConfig(polarity="hot")
    with pytest.raises(ValueError):
        warm_cfg(down_factor=1.1)
    with pytest.raises(ValueError):
        warm_cfg(reversals_averaged=11)
    with pytest.raises(ValueError):
        warm_cfg(initial_step_c=12.0)  # above default ceiling
    with pytest.raises(ValueError):
        warm_cfg(step_floor_c=0.0)
    with pytest.raises(ValueError):
        warm_cfg(reference_offset_c=16.0)
    with pytest.raises(TypeError):
        warm_cfg(pattern="line")


@settings(max_examples=120, deadline=None)
@given(st.lists(st.booleans(), min_size=1, max_size=120))
def test_step_evolution_property(flags):
    cfg = warm_cfg()
    state = fresh_state(cfg)
    reversal_counts = [0]
    for different in flags:
        if state.finished:
            break
        prev = state.current_step_c
        state = staircase_update(cfg, state, DIFFERENT if different else SAME)
        factor = 0.9 if different else 1.3
        unclamped = prev * factor
        if cfg.step_floor_c <= unclamped <= cfg.ceiling_c:
            assert state.current_step_c == pytest.approx(unclamped, rel=1e-12)
        assert cfg.step_floor_c <= state.current_step_c <= cfg.ceiling_c
        reversal_counts.append(len(state.reversal_steps))
    assert all(b >= a for a, b in zip(reversal_counts, reversal_counts[1:]))
    assert len(state.reversal_steps) <= cfg.reversals_to_stop


# --- observers ----------------------------------------------------------


def test_observer_midpoint():
    m = ObserverModel(threshold_mu=2.5, slope_sigma=0.8)
    assert m.p_different(2.5) == pytest.approx(0.5)


def test_observer_asymptotes_and_floors():
    m = ObserverModel(threshold_mu=2.0, slope_sigma=0.5, lapse_rate=0.03,
                      guess_rate=0.04)
    assert m.p_different(50.0) == pytest.approx(1.0 - 0.03, abs=1e-9)
    assert m.p_different(0.0) == pytest.approx(0.04, abs=1e-3)


def test_observer_deterministic_limit():
    m = ObserverModel(threshold_mu=2.5, slope_sigma=0.0, seed=9)
    assert all(m.respond(3.0) == DIFFERENT for _ in range(50))
    assert all(m.respond(2.0) == SAME for _ in range(50))


def test_observer_seed_reproducibility():
    a = ObserverModel(threshold_mu=2.5, seed=4)
    b = ObserverModel(threshold_mu=2.5, seed=4)
    deltas = [0.5 * k for k in range(1, 20)]
    assert [a.respond(d) for d in deltas] == [b.respond(d) for d in deltas]


def test_observer_validation():
    with pytest.raises(ValueError):
        ObserverModel(threshold_mu=0.0)
    with pytest.raises(ValueError):
        ObserverModel(threshold_mu=2.5, slope_sigma=-0.1)
    with pytest.raises(ValueError):
        ObserverModel(threshold_mu=2.5, lapse_rate=0.2)
    m = ObserverModel(threshold_mu=2.5)
    with pytest.raises(ValueError):
        m.p_different(-0.5)


# --- closed-loop convergence ---------------------------------------------


def test_deterministic_threshold_recovery():
    theta = 2.5
    quantum = (1.3 - 1.0) * theta  # coarsest step granularity near theta
    cfg = warm_cfg()
    for seed in range(5):
        m = ObserverModel(threshold_mu=theta, slope_sigma=0.0, seed=seed)
        state, trials = run_staircase(cfg, m)
        assert state.finished and len(state.reversal_steps) == 10
        assert abs(jnd_estimate(cfg, state) - theta) <= quantum
        # Reversal steps bracket the threshold from both sides.
        for s in state.reversal_steps:
            assert 0.9 * theta < s <= 1.3 * theta + 1e-12


def test_stochastic_mean_estimate_near_matched_threshold():
    p_star = drift_root()
    sigma = 0.8
    mu = 2.5 - sigma * phi_inv(p_star)  # p(different)=p* exactly at 2.5
    cfg = warm_cfg()
    estimates = []
    for seed in range(400):
        m = ObserverModel(threshold_mu=mu, slope_sigma=sigma, seed=seed)
        state, _ = run_staircase(cfg, m)
        estimates.append(jnd_estimate(cfg, state))
    mean_est = sum(estimates) / len(estimates)
    # The short-protocol arithmetic mean carries a small multiplicative
    # upward bias; 0.2 degC absorbs it by design.
    assert mean_est == pytest.approx(2.5, abs=0.2)


def test_reversal_distribution_converges_to_weighted_percentile():
    # Asymptotic check of the equilibrium percentile: long runs, early
    # reversals discarded, geometric center (the walk is multiplicative).
    p_star = drift_root()
    sigma = 1.0
    mu = 2.5 - sigma * phi_inv(p_star)
    cfg = warm_cfg(reversals_to_stop=120, reversals_averaged=100)
    pooled = []
    for seed in range(40):
        m = ObserverModel(threshold_mu=mu, slope_sigma=sigma, seed=seed)
        state, _ = run_staircase(cfg, m, max_trials=20000)
        pooled.extend(state.reversal_steps[20:])
    geo = math.exp(sum(map(math.log, pooled)) / len(pooled))
    probe = ObserverModel(threshold_mu=mu, slope_sigma=sigma)
    assert probe.p_different(geo) == pytest.approx(p_star, abs=0.02)


def test_every_bounded_observer_terminates():
    cfg = warm_cfg()
    for seed in range(300):
        m = ObserverModel(threshold_mu=2.5, slope_sigma=1.0, lapse_rate=0.05,
                          guess_rate=0.05, seed=seed)
        state, trials = run_staircase(cfg, m, max_trials=500)
        assert state.finished
        assert len(trials) <= 500


def test_degenerate_responder_hits_trial_guard():
    cfg = warm_cfg()
    with pytest.raises(StaircaseError, match="no convergence"):
        run_staircase(cfg, lambda d: SAME, max_trials=50)


def test_run_staircase_records_trials():
    cfg = warm_cfg()
    m = ObserverModel(threshold_mu=2.5, slope_sigma=0.0)
    state, trials = run_staircase(cfg, m)
    assert trials[0].trial_index == 0
    assert trials[0].delta_c == cfg.initial_step_c
    assert trials[0].test_c - trials[0].reference_c == pytest.approx(4.0)
    assert state.trial_count == len(trials)


# --- trial tables ---------------------------------------------------------


def test_exp2_counts_and_balance():
    table = exp2_trial_table(seed=1, repetitions=10)
    assert len(table) == 40
    truths = Counter(t.ground_truth for t in table)
    assert truths == {SAME: 20, DIFFERENT: 20}
    cells = Counter((t.presentation, t.polarity) for t in table)
    assert set(cells.values()) == {10}
    per_cell = Counter((t.presentation, t.polarity, t.ground_truth) for t in table)
    assert set(per_cell.values()) == {5}


def test_exp2_temperatures():
    table = exp2_trial_table(seed=0, repetitions=4, delta_c=4.0, base_offset_c=8.0)
    for t in table:
        base = 38.0 if t.polarity == "warm" else 22.0
        assert t.t_reference_c == base
        if t.ground_truth == SAME:
            assert t.t_comparison_c == base
        else:
            assert abs(t.t_comparison_c - base) == pytest.approx(4.0)


def test_exp2_determinism_and_shuffling():
    a = exp2_trial_table(seed=7)
    b = exp2_trial_table(seed=7)
    c = exp2_trial_table(seed=8)
    assert a == b
    assert [t.t_comparison_c for t in a] != [t.t_comparison_c for t in c]
    # Same design multiset regardless of seed.
    key = lambda tbl: Counter(
        (t.presentation, t.polarity, t.t_reference_c, t.t_comparison_c) for t in tbl
    )
    assert key(a) == key(c)


def test_exp2_validation():
    with pytest.raises(ValueError):
        exp2_trial_table(seed=0, repetitions=5)
    with pytest.raises(ValueError):
        exp2_trial_table(seed=0, delta_c=0.0)
    with pytest.raises(ValueError):
        exp2_trial_table(seed=0, delta_c=8.0, base_offset_c=8.0)


def test_exp3_pair_counts():
    table = exp3_pair_table(seed=3)
    assert len(table) == 72
    for polarity in ("warm", "cool"):
        rows = [t for t in table if t.polarity == polarity]
        changed = [(t.first, t.second) for t in rows if t.changed]
        assert len(changed) == 30
        assert len(set(changed)) == 30  # each ordered pair exactly once
        assert all(a != b for a, b in changed)
        catch = [t for t in rows if not t.changed]
        assert len(catch) == 6
        assert all(t.first == t.second for t in catch)
    names = {t.first for t in table} | {t.second for t in table}
    assert names == set(EXP3_PATTERN_NAMES)


def test_exp3_offsets_signed_by_polarity():
    table = exp3_pair_table(seed=3, offset_magnitude_c=8.0)
    assert {t.offset_c for t in table if t.polarity == "warm"} == {8.0}
    assert {t.offset_c for t in table if t.polarity == "cool"} == {-8.0}


def test_exp3_determinism():
    assert exp3_pair_table(seed=5) == exp3_pair_table(seed=5)
    a = [(t.first, t.second) for t in exp3_pair_table(seed=5)]
    b = [(t.first, t.second) for t in exp3_pair_table(seed=6)]
    assert a != b


def test_exp3_stream_timing_and_cells():
    table = exp3_pair_table(seed=2)
    trial = next(t for t in table if t.changed and t.polarity == "cool")
    stream = exp3_stream(trial, hold_s=3.0)
    assert stream.duration_s == 6.0
    assert stream.times_s == (0.0, 3.0)
    first = pattern_by_name(trial.first, trial.offset_c)
    early = stream.offsets_at(1.0)
    late = stream.offsets_at(4.5)
    for cell in range(9):
        if cell in first.active_cells:
            assert early[cell] == trial.offset_c
    second = pattern_by_name(trial.second, trial.offset_c)
    for cell in range(9):
        if cell in second.active_cells:
            assert late[cell] == trial.offset_c
        elif cell not in first.active_cells:
            assert late[cell] == 0.0


def test_exp3_validation():
    with pytest.raises(ValueError):
        exp3_pair_table(seed=0, catch_per_polarity=-1)
    with pytest.raises(ValueError):
        exp3_pair_table(seed=0, offset_magnitude_c=20.0)


# --- trial records ---------------------------------------------------------


def make_record() -> TrialRecord:
    return TrialRecord(
        session_id="s-01",
        participant_id="p-07",
        experiment="staircase",
        trial_index=3,
        condition={"polarity": "warm", "pattern": "all"},
        stimulus={"reference_c": 34.0, "test_c": 36.1, "delta_c": 2.1},
        response=DIFFERENT,
        response_time_s=0.84,
        ground_truth=None,
        timestamp_s=12.5,
    )


def test_trial_record_round_trip():
    rec = make_record()
    assert trial_record_from_json(rec.to_json()) == rec


def test_trial_record_rejects_unknown_and_wrong_kind():
    doc = make_record().to_json()
    doc["notes"] = "hello"
    with pytest.raises(ValueError, match="unknown"):
        trial_record_from_json(doc)
    doc = make_record().to_json()
    doc["kind"] = "frame"
    with pytest.raises(ValueError, match="kind"):
        trial_record_from_json(doc)
    doc = make_record().to_json()
    doc["schema"] = 2
    with pytest.raises(ValueError, match="schema"):
        trial_record_from_json(doc)
    doc = make_record().to_json()
    del doc["response"]
    with pytest.raises(ValueError, match="missing"):
        trial_record_from_json(doc)
