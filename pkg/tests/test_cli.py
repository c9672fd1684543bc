import io
import json
from pathlib import Path

import pytest

from pmu_gsa.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def run(argv):
    out = io.StringIO()
    code = main(argv, out=out)
    return code, out.getvalue()


@pytest.fixture
def small_config(tmp_path):
    doc = json.loads((CONFIGS / "scen1.json").read_text())
    doc["pso"] = {"swarm_size": 10, "max_iters": 30}
    doc["output_dir"] = str(tmp_path / "out")
    p = tmp_path / "scen.json"
    p.write_text(json.dumps(doc))
    return p


def test_validate_shipped_configs():
    for p in sorted(CONFIGS.glob("*.json")):
        code, out = run(["validate", "--config", str(p)])
        assert code == 0 and out.startswith("ok:")
    assert run(["validate", "--feeder", "ieee123"])[0] == 0


def test_validate_bad_config(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"feeder": "ieee34", "placement": {"pmus": [800, 816]}, "psi": [0, 0.5, 1]}))
    code, _ = run(["validate", "--config", str(p)])
    assert code == 1
    assert "psi" in capsys.readouterr().err


def test_usage_errors_exit_1(capsys):
    assert run(["frobnicate"])[0] == 1
    assert run(["identify", "--bogus-flag"])[0] == 1
    assert "usage" in capsys.readouterr().err
    assert run(["identify"])[0] == 1


def test_bad_placement_exit_1(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"feeder": "ieee34", "placement": {"pmus": [816, 800]}, "psi": [0, 0]}))
    assert run(["identify", "--config", str(p)])[0] == 1


def test_runtime_failure_exit_2(tmp_path):
    from pmu_gsa.feeder import load_feeder, to_document
    doc = to_document(load_feeder("ieee34"))
    for ld in doc["loads"]:
        ld["kw"] *= 50
    (tmp_path / "heavy.json").write_text(json.dumps(doc))
    assert run(["powerflow", "--feeder", str(tmp_path / "heavy.json")])[0] == 2


def test_powerflow_csv():
    code, out = run(["powerflow", "--feeder", "ieee34"])
    lines = out.strip().splitlines()
    assert code == 0 and lines[0] == "bus,phase,v_pu,angle_deg"
    assert lines[1].startswith("800,a,1.05,0")


def test_identify_and_sweep(small_config):
    code, out = run(["identify", "--config", str(small_config)])
    assert code == 0
    rows = [r.split(",") for r in out.strip().splitlines()[1:]]
    assert {r[0]: r[4] for r in rows}["3"] == "PositiveInterval"
    code, out = run(["sweep", "--config", str(small_config), "--pmu", "3", "--grid-deg", "1"])
    lines = out.strip().splitlines()
    assert code == 0 and lines[0] == "theta_rad,theta_pi,J" and len(lines) == 362
    assert run(["sweep", "--config", str(small_config)])[0] == 1
    assert run(["sweep", "--config", str(small_config), "--pmu", "1"])[0] == 1


def test_estimate_attack_correct(small_config, capsys):
    assert run(["estimate", "--config", str(small_config)])[0] == 0
    code, out = run(["attack", "--config", str(small_config)])
    assert code == 0 and "spoofed_angle_deg" in out
    code, out = run(["correct", "--config", str(small_config)])
    assert code == 0
    row3 = out.strip().splitlines()[3].split(",")
    assert row3[0] == "3" and abs(float(row3[1]) - 0.5) < 0.02
    code, out = run(["correct", "--config", str(small_config), "--baseline", "golden"])
    assert code == 0 and "evaluations=150" in capsys.readouterr().err
    assert run(["identify", "--config", str(small_config), "--delta-theta", "0.01"])[0] == 1


def test_montecarlo_outputs_and_byte_identical(small_config, tmp_path):
    args = ["montecarlo", "--config", str(small_config), "--trials", "2", "--seed", "7", "--no-timestamp"]
    code, out1 = run(args + ["--output-dir", str(tmp_path / "a")])
    assert code == 0
    code, out2 = run(args + ["--output-dir", str(tmp_path / "b")])
    assert out1 == out2
    agg = json.loads(out1)
    assert agg["PMD"] == 0 and agg["trials"] == 2 and "timestamp" not in agg
    for name in ("trials.csv", "rmse.csv", "aggregate.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    code, out = run(args[:-1] + ["--output-dir", str(tmp_path / "c")])
    assert "timestamp" in json.loads(out)
