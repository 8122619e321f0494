import csv
import json

import numpy as np
import pytest
from conftest import DESK_CONFIG

from sgalm.cli import aggregate, gradcheck, main
from sgalm.config import build_run_config, load_config, parse_text
from sgalm.model import ConfigError

DEFAULTS = """
# the library defaults, written out
carrier_frequency = 54e9
num_antennas = 257
num_users = 2
num_targets = 4
noise_power_dbm = -90
max_power_dbm = 30
beampattern_thresholds_dbm = 10
rate_thresholds = 15
target_angles = -65, -45, 30, 60
"""

# a small, fast run file used by the CLI tests
SMALL = """
carrier_frequency = 54e9
num_antennas = 9
num_users = 2
num_targets = 2
noise_power_dbm = -60
max_power_dbm = 30
beampattern_thresholds_dbm = -30
rate_thresholds = 1
target_angles = -45, 30
max_fp = 3
"""


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_parse_text():
    d = parse_text("a = 1  # note\n\n b=x, y \n")
    assert d == {"a": "1", "b": "x, y"}
    with pytest.raises(ConfigError):
        parse_text("novalue\n")
    with pytest.raises(ConfigError):
        parse_text("a = 1\na = 2\n")


def test_default_values_config():
    run = build_run_config(parse_text(DEFAULTS))
    sc = run.scenario
    assert sc.num_antennas == 257 and sc.num_targets == 4
    assert sc.noise_power == pytest.approx(1e-12)
    assert sc.max_power == pytest.approx(1.0)
    assert np.allclose(sc.beampattern_thresholds, 1e-2)
    assert np.allclose(sc.rate_thresholds, 15)
    assert run.trials == 50


@pytest.mark.parametrize("key", ["num_antennas", "noise_power_dbm", "target_angles"])
def test_missing_key_named(key):
    text = "\n".join(l for l in DEFAULTS.splitlines() if not l.startswith(key))
    with pytest.raises(ConfigError, match=key.replace("_dbm", "")):
        build_run_config(parse_text(text))


def test_bad_values():
    with pytest.raises(ConfigError, match="unknown"):
        build_run_config(parse_text(DEFAULTS + "frobnicate = 1\n"))
    with pytest.raises(ConfigError):
        build_run_config(parse_text(DEFAULTS.replace("num_users = 2", "num_users = two")))
    with pytest.raises(ConfigError):
        build_run_config(parse_text(DEFAULTS + "method = newton\n"))
    with pytest.raises(ConfigError):
        build_run_config(parse_text(DEFAULTS + "noise_power = 1e-12\n"))
    with pytest.raises(ConfigError):
        load_config("/nonexistent/run.cfg")


def test_solver_keys():
    run = build_run_config(parse_text(DEFAULTS + "method = cg\nbatch_fraction = 0.25\nmultiplier_bounds = 0, 50\nmax_step_norm = none\n"))
    assert run.solver.method == "cg"
    assert run.solver.batch_fraction == 0.25
    assert run.solver.multiplier_bounds == (0.0, 50.0)
    assert run.solver.max_step_norm is None


def test_solve_writes_outputs(tmp_path, capsys):
    cfg = write(tmp_path, SMALL)
    out = tmp_path / "o"
    assert main(["solve", "--config", str(cfg), "--out", str(out), "--seed", "4", "--trace", "--dump-channels"]) == 0
    s = json.loads((out / "summary.json").read_text())
    for key in ("sum_rate", "sinr_db", "gain_dbm", "feasible", "iterations", "wall_time_s", "seed"):
        assert key in s
    assert s["config"]["noise_power_dbm"] == pytest.approx(-60)
    prov = json.loads((out / "provenance.json").read_text())
    assert prov["seed"] == 4 and "version" in prov and prov["solver"]["max_fp"] == 3
    rows = list(csv.reader((out / "channels.csv").open()))
    assert rows[0] == ["node_id", "node_kind", "antenna_index", "re", "im"]
    assert len(rows) == 1 + 9 * 4
    trace = list(csv.DictReader((out / "trace.csv").open()))
    assert trace[0]["fp_round"] == "0"
    assert all(float(r["grad_norm"]) > 0 for r in trace)


def test_solve_repeatable(tmp_path):
    cfg = write(tmp_path, SMALL)
    blobs = []
    for name in ("a", "b"):
        main(["solve", "--config", str(cfg), "--out", str(tmp_path / name), "--seed", "2"])
        s = json.loads((tmp_path / name / "summary.json").read_text())
        s.pop("wall_time_s")
        blobs.append(json.dumps(s, sort_keys=True))
    assert blobs[0] == blobs[1]


def test_exit_codes(tmp_path, capsys):
    bad = write(tmp_path, SMALL.replace("num_users = 2\n", ""), "bad.cfg")
    assert main(["solve", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2
    assert "num_users" in capsys.readouterr().err
    # a sensing threshold far above what the array can deliver
    infeasible = write(tmp_path, SMALL.replace("beampattern_thresholds_dbm = -30", "beampattern_thresholds_dbm = 20"), "inf.cfg")
    assert main(["solve", "--config", str(infeasible), "--out", str(tmp_path / "y"), "--require-feasible"]) == 3
    assert main(["solve", "--config", str(infeasible), "--out", str(tmp_path / "z")]) == 0


def test_beampattern_command(tmp_path):
    cfg = write(tmp_path, SMALL)
    out = tmp_path / "bp"
    assert main(["beampattern", "--config", str(cfg), "--out", str(out), "--seed", "1"]) == 0
    rows = list(csv.DictReader((out / "beampattern.csv").open()))
    assert len(rows) == 361
    assert all(float(r["gain_watts"]) >= 0 for r in rows)
    assert float(rows[0]["angle_deg"]) == -90 and float(rows[-1]["angle_deg"]) == 90


def test_sweep_command(tmp_path):
    cfg = write(tmp_path, SMALL)
    out = tmp_path / "sw"
    assert main(["sweep", "--config", str(cfg), "--out", str(out), "--param", "omega", "--values=-40,-30", "--trials", "2"]) == 0
    rows = list(csv.DictReader((out / "sweep.csv").open()))
    assert [r["sweep_value"] for r in rows] == ["-40", "-30"]
    assert set(rows[0]) == {"sweep_value", "mean_sum_rate", "std_sum_rate", "feasibility_rate", "mean_wall_time_s"}
    trials = list(csv.DictReader((out / "trials.csv").open()))
    assert len(trials) == 4
    # same trial index means same scenario seed at every sweep point
    assert trials[0]["seed"] == trials[2]["seed"]
    assert main(["sweep", "--config", str(cfg), "--out", str(out), "--param", "power", "--values", "1"]) == 2


def test_sweep_parallel_matches_serial(tmp_path):
    cfg = write(tmp_path, SMALL)
    for w in ("1", "2"):
        main(["sweep", "--config", str(cfg), "--out", str(tmp_path / w), "--param", "M", "--values", "5,9", "--trials", "2", "--workers", w])
    a = (tmp_path / "1" / "trials.csv").read_text().splitlines()
    b = (tmp_path / "2" / "trials.csv").read_text().splitlines()
    strip = lambda rows: [",".join(r.split(",")[:5]) for r in rows]
    assert strip(a) == strip(b)


def test_single_trial_std_zero():
    rows = aggregate([{"sweep_value": "x", "sum_rate": 3.0, "feasible": True, "wall_time_s": 0.1}], ["x"])
    assert rows[0]["std_sum_rate"] == 0.0


def test_convergence_command(tmp_path):
    out = tmp_path / "cv"
    cfg = write(tmp_path, SMALL)
    assert main(["convergence", "--config", str(cfg), "--out", str(out), "--seed", "0"]) == 0
    rows = list(csv.DictReader((out / "trace.csv").open()))
    assert rows[0]["fp_round"] == "0"
    assert all(np.isfinite(float(r["grad_norm"])) and float(r["grad_norm"]) > 0 for r in rows)


def test_gradcheck(tmp_path, capsys):
    rep = gradcheck(trials=4)
    assert set(rep) >= {"max_rel_err", "mean_rel_err", "trials", "pass"}
    assert rep["pass"] and rep["max_rel_err"] <= 1e-5
    assert not gradcheck(trials=4, corrupt=True)["pass"]
    assert main(["gradcheck", "--trials", "2", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "gradcheck.json").read_text())["trials"] == 2


def test_desk_config_loads():
    run = load_config(DESK_CONFIG)
    assert run.scenario.num_antennas == 33
    assert run.scenario.beampattern_thresholds == pytest.approx((1e-6, 1e-6))
