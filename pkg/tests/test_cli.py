"""Command-line behavior: outputs, artifact writing, exit codes."""

import csv
import json
import re
import subprocess
import sys
import time

import pytest

from palmtherm.cli import main


def run_cli(*args):
    return main(list(args))


def test_budget_prints_rated_numbers(capsys):
    assert run_cli("budget") == 0
    out = capsys.readouterr().out
    assert "24.49" in out
    assert "2.60" in out
    assert "9" in out


def test_budget_subprocess_is_fast():
    t0 = time.time()
    proc = subprocess.run([sys.executable, "-m", "palmtherm", "budget"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "24.49" in proc.stdout
    assert time.time() - t0 < 1.0


def test_unknown_flag_rejected_with_usage(capsys):
    with pytest.raises(SystemExit) as exc:
        run_cli("budget", "--frobnicate")
    assert exc.value.code == 2
    assert "usage:" in capsys.readouterr().err


def test_missing_subcommand_rejected(capsys):
    with pytest.raises(SystemExit) as exc:
        run_cli()
    assert exc.value.code == 2


def test_simulate_closed_loop_trace(tmp_path, capsys):
    out = tmp_path / "trace.csv"
    assert run_cli("simulate", "--step", "20", "--duration", "8",
                   "--out", str(out)) == 0
    text = capsys.readouterr().out
    assert "10-90% rise" in text
    rise = float(re.search(r"rise (\d+\.\d+) s", text).group(1))
    assert 1.4 * 0.9 <= rise <= 1.4 * 1.1
    with open(out) as f:
        rows = list(csv.reader(f))
    assert rows[0][:3] == ["time_s", "setpoint_c", "t_cold_c"]
    assert len(rows) == 1 + 8 * 100


def test_simulate_mode_overrides_sign(tmp_path, capsys):
    out = tmp_path / "cool.csv"
    assert run_cli("simulate", "--step", "20", "--mode", "cool",
                   "--duration", "10", "--out", str(out)) == 0
    text = capsys.readouterr().out
    assert "-20.0 C step" in text
    rise = float(re.search(r"rise (\d+\.\d+) s", text).group(1))
    assert 2.4 * 0.9 <= rise <= 2.4 * 1.1


def test_simulate_open_loop(tmp_path, capsys):
    out = tmp_path / "open.csv"
    assert run_cli("simulate", "--loop", "open", "--current", "0.05",
                   "--duration", "5", "--out", str(out)) == 0
    assert "open-loop" in capsys.readouterr().out
    with open(out) as f:
        rows = list(csv.reader(f))
    assert len(rows) == 1 + 5 * 100
    assert float(rows[-1][2]) > 30.0  # warming current raised the plate


def test_simulate_preroll_must_fit(capsys):
    assert run_cli("simulate", "--preroll", "20", "--duration", "10") == 2
    assert "preroll" in capsys.readouterr().err


def test_open_loop_divergence_is_a_fault(tmp_path, capsys):
    rc = run_cli("simulate", "--loop", "open", "--current", "0.7",
                 "--duration", "120", "--out", str(tmp_path / "x.csv"))
    assert rc == 3
    assert "fault:" in capsys.readouterr().err


def test_staircase_session_artifacts(tmp_path, capsys):
    rc = run_cli("staircase", "--seed", "5", "--out", str(tmp_path),
                 "--conditions", "warm:line", "--reversals", "4",
                 "--stimulus-duration", "0.5")
    assert rc == 0
    out = capsys.readouterr().out
    assert "warm/line" in out and "jnd" in out
    sdir = tmp_path / "staircase-s5-sim-observer"
    summary = json.loads((sdir / "summary.json").read_text())
    assert summary["status"] == "completed"


def test_staircase_monte_carlo_matches_library(capsys):
    assert run_cli("staircase", "--runs", "6",
                   "--observer", "mu=2.5,sigma=0",
                   "--conditions", "warm:all") == 0
    line = [l for l in capsys.readouterr().out.splitlines()
            if "warm/all" in l][0]
    mean, sd = map(float, re.search(
        r"jnd (\d+\.\d+) \+- (\d+\.\d+) C", line).groups())
    assert sd == 0.0  # zero-slope observer answers deterministically

    from palmtherm.patterns import pattern_by_name
    from palmtherm.psychophys import (ObserverModel, StaircaseConfig,
                                      jnd_estimate, run_staircase)
    cfg = StaircaseConfig(polarity="warm", pattern=pattern_by_name("all"))
    st, _ = run_staircase(cfg, ObserverModel(2.5, slope_sigma=0.0, seed=0))
    assert mean == pytest.approx(jnd_estimate(cfg, st), abs=5e-4)


def test_global_flag_position_is_flexible(tmp_path):
    # before the subcommand
    assert run_cli("--seed", "5", "--out", str(tmp_path / "a"), "staircase",
                   "--conditions", "warm:line", "--reversals", "2",
                   "--stimulus-duration", "0.5") == 0
    # after the subcommand
    assert run_cli("staircase", "--seed", "5", "--out", str(tmp_path / "b"),
                   "--conditions", "warm:line", "--reversals", "2",
                   "--stimulus-duration", "0.5") == 0
    a = (tmp_path / "a" / "staircase-s5-sim-observer" / "trials.jsonl")
    b = (tmp_path / "b" / "staircase-s5-sim-observer" / "trials.jsonl")
    assert a.read_bytes() == b.read_bytes()


def test_bad_observer_spec(capsys):
    assert run_cli("staircase", "--observer", "mu=") == 2
    assert run_cli("staircase", "--observer", "theta=2.5") == 2
    assert run_cli("staircase", "--conditions", "warmline") == 2


def test_patterns_list(capsys):
    assert run_cli("patterns", "list") == 0
    out = capsys.readouterr().out
    for name in ("top_row", "middle_column", "line", "all"):
        assert name in out


def test_patterns_show_grid(capsys):
    assert run_cli("patterns", "show", "middle_column") == 0
    out = capsys.readouterr().out
    assert out.count(". # .") == 3
    doc = json.loads(out[out.index("{"):])
    assert doc["active_cells"] == [1, 4, 7]


def test_patterns_show_unknown(capsys):
    assert run_cli("patterns", "show", "nonesuch") == 2
    err = capsys.readouterr().err
    assert "nonesuch" in err


def test_patterns_show_file(tmp_path, capsys):
    from palmtherm.patterns import pattern_by_name, pattern_file_save
    path = tmp_path / "custom.json"
    pattern_file_save(pattern_by_name("left_column", 5.0), path)
    assert run_cli("patterns", "show", str(path), "--file") == 0
    out = capsys.readouterr().out
    assert "# . ." in out


def test_patterns_play_reports_cells(capsys):
    assert run_cli("patterns", "play", "line", "--hold", "0.5") == 0
    out = capsys.readouterr().out
    rows = [l.split() for l in out.splitlines() if re.match(r"\s+\d ", l)]
    targets = [float(r[1]) for r in rows]
    assert targets[6:] == [38.0, 38.0, 38.0]
    assert targets[:6] == [30.0] * 6


def test_export_csv(tmp_path, capsys):
    assert run_cli("staircase", "--seed", "5", "--out", str(tmp_path),
                   "--conditions", "warm:line", "--reversals", "3",
                   "--stimulus-duration", "0.5") == 0
    sdir = tmp_path / "staircase-s5-sim-observer"
    assert run_cli("export-csv", str(sdir)) == 0
    with open(sdir / "trials.csv") as f:
        rows = list(csv.DictReader(f))
    n_trials = len((sdir / "trials.jsonl").read_text().splitlines()) - 1
    assert len(rows) == n_trials
    assert rows[0]["experiment"] == "staircase"
    assert rows[0]["response"] in ("same", "different")


def test_export_csv_missing_dir(tmp_path, capsys):
    assert run_cli("export-csv", str(tmp_path / "nope")) == 2


def test_calibrate_writes_model_file(tmp_path, capsys):
    out = tmp_path / "cal.json"
    rc = run_cli("calibrate", "--out", str(out))
    assert rc == 0
    doc = json.loads(out.read_text())
    assert doc["kind"] == "calibration"
    assert doc["fit"]["warm_rise_s"] == pytest.approx(1.4, rel=0.1)
    assert doc["fit"]["cool_rise_s"] == pytest.approx(2.4, rel=0.1)
    text = capsys.readouterr().out
    assert "gains:" in text
