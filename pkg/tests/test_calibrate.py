"""Plant-constant fitting and the packaged default calibration."""

import numpy as np
import pytest

from palmtherm.calibrate import (
    CAL_STEP_C,
    CalibrationError,
    CalibrationRecord,
    DEFAULT_BOUNDS,
    calibrate_plant,
    load_default_calibration,
    measure_rise_times,
    select_gains,
)
from palmtherm.control import PidGains
from palmtherm.plant import ChannelThermalModel


def test_packaged_calibration_loads():
    rec = load_default_calibration()
    assert isinstance(rec.model, ChannelThermalModel)
    assert isinstance(rec.gains, PidGains)
    assert rec.step_c == CAL_STEP_C
    assert rec.target_warm_rise_s == 1.4
    assert rec.target_cool_rise_s == 2.4
    lo, hi = DEFAULT_BOUNDS["heat_capacity"]
    assert lo <= rec.model.heat_capacity <= hi


def test_packaged_calibration_reproduces_targets():
    rec = load_default_calibration()
    warm, cool = measure_rise_times(rec.model, rec.gains, rec.tem,
                                    rec.coolant)
    assert abs(warm / 1.4 - 1.0) <= 0.10
    assert abs(cool / 2.4 - 1.0) <= 0.10
    assert cool > warm  # waste heat helps warming, fights cooling
    # stored fit values describe the same simulation
    assert abs(warm - rec.warm_rise_s) < 1e-6
    assert abs(cool - rec.cool_rise_s) < 1e-6


def test_calibrate_plant_recovers_model_from_scratch():
    rec = load_default_calibration()
    model = calibrate_plant(1.4, 2.4, rec.gains, rec.tem, rec.coolant)
    warm, cool = measure_rise_times(model, rec.gains, rec.tem, rec.coolant)
    assert 1.26 <= warm <= 1.54
    assert 2.16 <= cool <= 2.64
    assert cool > warm


def test_calibrate_plant_infeasible_target_raises():
    rec = load_default_calibration()
    with pytest.raises(CalibrationError) as exc:
        calibrate_plant(0.01, 0.02, rec.gains, rec.tem, rec.coolant,
                        max_rounds=6, n_starts=1)
    res = exc.value.residuals
    assert res["target_warm_rise_s"] == 0.01
    assert res["warm_rise_s"] > 0.1  # nowhere near a 10 ms rise
    assert "fit" in res


def test_calibrate_plant_rejects_bad_targets():
    rec = load_default_calibration()
    with pytest.raises(ValueError):
        calibrate_plant(-1.0, 2.4, rec.gains)
    with pytest.raises(ValueError):
        calibrate_plant(1.4, 0.0, rec.gains)


def test_select_gains_matches_packaged_limit():
    rec = load_default_calibration()
    gains = select_gains(rec.tem, rec.coolant)
    assert abs(gains.output_limit_a - rec.gains.output_limit_a) < 0.01
    assert gains.kp == rec.gains.kp
    assert gains.ki == rec.gains.ki


def test_record_round_trip_and_schema_guard():
    rec = load_default_calibration()
    doc = rec.to_json()
    again = CalibrationRecord.from_json(doc)
    assert again.model == rec.model
    assert again.gains == rec.gains
    doc_bad = dict(doc, mystery=1)
    with pytest.raises(ValueError, match="unknown"):
        CalibrationRecord.from_json(doc_bad)
    with pytest.raises(ValueError, match="schema"):
        CalibrationRecord.from_json(dict(doc, schema=9))
    with pytest.raises(ValueError, match="calibration"):
        CalibrationRecord.from_json(dict(doc, kind="other"))


def test_rise_times_scale_with_heat_capacity():
    # both responses slow down together when the plate gets heavier
    rec = load_default_calibration()
    m = rec.model
    heavier = ChannelThermalModel(heat_capacity=2 * m.heat_capacity,
                                  g_skin=m.g_skin, g_sink=m.g_sink)
    w1, c1 = measure_rise_times(m, rec.gains, rec.tem, rec.coolant)
    w2, c2 = measure_rise_times(heavier, rec.gains, rec.tem, rec.coolant)
    assert w2 > 1.5 * w1
    assert c2 > 1.5 * c1
