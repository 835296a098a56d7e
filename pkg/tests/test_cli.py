import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from assessix.cli import audit_schedule, load_galois_fixtures, main, parse_scenario
from assessix.errors import AdaptednessError, SchemaError

ROOT = Path(__file__).resolve().parents[1]
SCEN = ROOT / "scenarios"


def run_cli(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_evaluate_dglr_e1(capsys):
    code, out, _ = run_cli(capsys, "--scenario", SCEN / "e1.json", "--cmd", "evaluate", "--index", "dglr", "--t", 1)
    assert code == 0
    rep = json.loads(out)
    assert rep["status"] == "PASS" and rep["index"]["scale_invariant"]
    row = next(r for r in rep["results"] if r["name"] == "x_tilde")
    assert row["values"] == [1.0, 1.0, 0.0, 0.0] and row["regions"] == [1, 1, 3, 3]
    assert [c["atoms"] for c in row["cells"]] == [[0, 1], [2, 3]]


def test_evaluate_oce_constant(capsys, tmp_path):
    scen = {"probs": [0.25, 0.75], "partitions": [[[0, 1]]], "variables": {"c": [3.5, 3.5]}}
    path = tmp_path / "c.json"
    path.write_text(json.dumps(scen))
    code, out, _ = run_cli(capsys, "--scenario", path, "--cmd", "evaluate", "--index", "oce",
                           "--param", "utility=exponential", "--param", "gamma=2")
    assert code == 0
    assert np.allclose(json.loads(out)["results"][0]["values"], 3.5, atol=1e-9)


def test_input_errors_exit_2(capsys, tmp_path):
    code, out, err = run_cli(capsys, "--scenario", SCEN / "not_adapted.json", "--cmd", "evaluate")
    assert code == 2 and out == "" and "row 1 is not constant on cell 0" in err
    code, _, err = run_cli(capsys, "--scenario", SCEN / "e1.json", "--cmd", "evaluate", "--index", "sharpe")
    assert code == 2 and "UnknownIndex" in err
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"probs": [0.5, 0.6], "partitions": [[[0, 1]]]}))
    assert run_cli(capsys, "--scenario", bad, "--cmd", "evaluate")[0] == 2
    assert run_cli(capsys, "--scenario", SCEN / "e1.json", "--cmd", "evaluate", "--t", 9)[0] == 2
    assert run_cli(capsys, "--cmd", "evaluate")[0] == 2


def test_parse_scenario_errors():
    with pytest.raises(SchemaError):
        parse_scenario({"probs": [1.0]})
    with pytest.raises(AdaptednessError):
        parse_scenario({"probs": [0.5, 0.5], "partitions": [[[0, 1]]], "processes": {"x": [[1, 2]]}})


def test_verify_all_passes(capsys):
    code, out, err = run_cli(capsys, "--cmd", "verify", "--seed", 3)
    rep = json.loads(out)
    assert code == 0 and rep["status"] == "PASS", {k: v["passed"] for k, v in rep["suites"].items()}
    assert set(rep["suites"]) >= {"locality", "duality", "galois", "gamma-d", "bellman",
                                  "strong-consistency", "dual-refinement", "representation"}
    assert "finished in" in err and "finished" not in out


def test_verify_dglr_negative(capsys):
    args = ("--scenario", SCEN / "two_atoms.json", "--cmd", "verify", "--suites", "strong-consistency",
            "--index", "dglr")
    code, out, _ = run_cli(capsys, *args, "--expect-negative")
    rep = json.loads(out)
    assert code == 1 and rep["status"] == "EXPECTED_NEGATIVE"
    assert rep["suites"]["strong-consistency"]["details"]["violations"] >= 1
    code, out, _ = run_cli(capsys, *args)
    assert code == 1 and json.loads(out)["status"] == "FAIL"


def test_verify_galois_suite(capsys):
    code, out, _ = run_cli(capsys, "--cmd", "verify", "--suites", "galois")
    assert code == 0 and json.loads(out)["suites"]["galois"]["max_error"] == 0.0
    assert "two_atom_linear_vs_constant" in [f["name"] for f in load_galois_fixtures()["fixtures"]]


def test_dual_audit_two_atoms(capsys):
    code, out, _ = run_cli(capsys, "--scenario", SCEN / "two_atoms.json", "--cmd", "dual-audit", "--index", "dglr")
    rep = json.loads(out)
    assert code == 0
    levels = rep["audits"]["x_tilde"]["details"]["levels"]
    gaps = [lv["gap"] for lv in levels]
    assert [lv["h"] for lv in levels] == [0.05, 0.02, 0.01] == audit_schedule(0.01)
    assert np.allclose(gaps, [1 / 3, 1 / 8, 1 / 33], atol=1e-12)


def test_csv_output(capsys, tmp_path):
    out_file = tmp_path / "r.csv"
    code, out, _ = run_cli(capsys, "--scenario", SCEN / "e1.json", "--cmd", "evaluate", "--index", "dglr",
                           "--t", 1, "--format", "csv", "--out", out_file)
    lines = out_file.read_text().splitlines()
    assert code == 0 and out == ""
    assert lines[0] == "kind,name,t,atom,value"
    assert "variable,x_tilde,1,2,0.0" in lines


def test_deterministic_reruns():
    cmd = [sys.executable, "-m", "assessix", "--cmd", "verify", "--seed", "11", "--suites",
           "duality,dual-refinement,strong-consistency"]
    a = subprocess.run(cmd, capture_output=True, cwd=ROOT)
    b = subprocess.run(cmd, capture_output=True, cwd=ROOT)
    assert a.returncode == b.returncode == 0
    assert a.stdout == b.stdout and len(a.stdout) > 0
