import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from kpsh.cli import main, parse_matrix
from kpsh.fieldio import load_field, save_field
from kpsh.constructions.potentials import Quadratic
from kpsh.fields import GridDomain


def run_cli(tmp_path, *argv, name="report.json"):
    out = tmp_path / name
    code = main([*argv, "--report", str(out)])
    report = json.loads(out.read_text()) if out.exists() else None
    return code, report


def test_eig_example(tmp_path):
    code, rep = run_cli(tmp_path, "eig", "--matrix", "[[3,0,0],[0,-1,0],[0,0,2]]", "--q", "2")
    assert code == 0 and rep["passed"]
    assert rep["results"]["spectrum"] == pytest.approx([-1, 2, 3])
    assert rep["results"]["margin"] == pytest.approx(1.0)
    assert set(rep["provenance"]) >= {"kpsh", "git_describe", "python", "numpy", "threads"}


def test_eig_negative_margin_is_informational(tmp_path):
    code, rep = run_cli(tmp_path, "eig", "--matrix", "[[-3,0,0],[0,1,0],[0,0,1]]", "--q", "2")
    assert code == 0
    assert rep["results"]["margin"] == pytest.approx(-2.0)


def test_complex_matrix_syntax():
    H = parse_matrix('[[1, "1j"], ["-1j", 1]]')
    assert H[0, 1] == 1j and H[1, 0] == -1j


def test_psh_verify_abs2(tmp_path):
    code, rep = run_cli(tmp_path, "psh-verify", "--potential", "abs2", "--q", "1", "--grid", "32")
    assert code == 0
    assert rep["results"]["margin_min"] == pytest.approx(2.0, abs=1e-8)


def test_psh_verify_failure_exits_1(tmp_path):
    pot = json.dumps({"kind": "quadratic", "H": [[1.0, 0], [0, -3.0]]})
    code, rep = run_cli(tmp_path, "psh-verify", "--potential", pot, "--q", "1", "--grid", "8")
    assert code == 1 and rep is not None and not rep["passed"]


def test_psh_verify_strict_eps(tmp_path):
    # abs2 has margin 2q; eps = 3 asks for 6 at q = 2, which it does not reach
    assert run_cli(tmp_path, "psh-verify", "--potential", "abs2", "--q", "2", "--grid", "8", "--eps", "1.9")[0] == 0
    assert run_cli(tmp_path, "psh-verify", "--potential", "abs2", "--q", "2", "--grid", "8", "--eps", "3")[0] == 1


def test_psh_verify_field_input(tmp_path):
    dom = GridDomain.cube(2, 9, 1.0)
    path = tmp_path / "phi.bin"
    save_field(path, Quadratic(np.diag([1.0, 2.0])).on_grid(dom))
    code, rep = run_cli(tmp_path, "psh-verify", "--input", str(path), "--q", "2", "--planes", "16")
    assert code == 0
    assert rep["results"]["margin_min"] == pytest.approx(3.0, abs=1e-8)


@pytest.mark.parametrize("argv", [
    ["eig", "--matrix", "[[1,2],[0,1]]"],  # not Hermitian
    ["eig"],  # missing matrix
    ["psh-verify", "--potential", "abs2", "--q", "5"],
    ["psh-verify", "--potential", "nonsense", "--q", "1"],
    ["positivity", "--matrix", "[[1,0],[0,1]]"],  # missing q
    ["sibony", "--beta", "1.5"],
    ["construct", "glue", "--tol", "psh"],  # malformed tolerance
    ["no-such-command"],
])
def test_config_errors_exit_2(tmp_path, argv, capsys):
    assert main([*argv, "--report", str(tmp_path / "r.json")]) == 2


def test_heat_on_box_field_is_a_config_error(tmp_path):
    dom = GridDomain.cube(1, 8, 1.0)
    path = tmp_path / "box.bin"
    save_field(path, Quadratic(np.eye(1)).on_grid(dom))
    assert main(["heat", "--input", str(path), "--q", "1", "--t", "0.01"]) == 2


def test_bad_thread_setting(tmp_path, monkeypatch):
    monkeypatch.setenv("KPSH_THREADS", "zero")
    assert main(["eig", "--matrix", "[[1]]"]) == 2
    monkeypatch.setenv("KPSH_THREADS", "3")
    code, rep = run_cli(tmp_path, "eig", "--matrix", "[[1]]")
    assert code == 0 and rep["provenance"]["threads"] == 3


def test_config_file_overrides_flags(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"params": {"q": 1}, "grid": {"points": 6}}))
    code, rep = run_cli(tmp_path, "psh-verify", "--potential", "abs2", "--q", "2", "--grid", "8",
                        "--config", str(cfg))
    assert code == 0
    assert rep["config"]["params"]["q"] == 1 and rep["config"]["grid"]["points"] == 6
    assert rep["results"]["margin_min"] == pytest.approx(2.0)


def test_config_for_another_subcommand(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"subcommand": "heat"}))
    assert main(["eig", "--matrix", "[[1]]", "--config", str(cfg)]) == 2


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"colour": "red"}))
    assert main(["eig", "--matrix", "[[1]]", "--config", str(cfg)]) == 2


def test_positivity_matrix(tmp_path):
    code, rep = run_cli(tmp_path, "positivity", "--matrix", "[[-1,0,0],[0,2,0],[0,0,3]]", "--q", "2",
                        "--trials", "8")
    assert code == 0
    assert rep["results"]["psh_margin"] == pytest.approx(1.0)


def test_sibony_writes_csv_sidecar(tmp_path):
    code, rep = run_cli(tmp_path, "sibony", "--N", "4,8,16")
    assert code == 0
    rows = list(csv.reader((tmp_path / "report.csv").open()))
    assert rows[0] == ["N", "I_N", "stabilization_index"]
    assert [r[0] for r in rows[1:]] == ["4", "8", "16"]
    I = [float(r[1]) for r in rows[1:]]
    assert abs(I[-1] - I[-2]) < 1e-3 * I[-1]


@pytest.mark.parametrize("kind", ["torus-embed", "product", "glue", "exhaust"])
def test_construct_kinds(tmp_path, kind):
    out = tmp_path / "field.bin"
    code, rep = run_cli(tmp_path, "construct", kind, "--output", str(out))
    assert code == 0, rep["claims"]
    assert load_field(out).values.size > 0
    assert rep["results"]["params"]["q" if kind != "torus-embed" else "R"] is not None


def test_construct_params_file(tmp_path):
    params = tmp_path / "p.json"
    params.write_text(json.dumps({"a": 0.25}))
    code, rep = run_cli(tmp_path, "construct", "product", "--params", str(params))
    assert code == 0 and rep["results"]["params"]["a"] == 0.25
    params.write_text(json.dumps({"colour": 1}))
    assert main(["construct", "product", "--params", str(params)]) == 2


def test_heat_canonical(tmp_path):
    code, rep = run_cli(tmp_path, "heat", "--canonical", "bowl", "--t", "1e-4,1e-3", "--q", "1",
                        "--grid", "16", "--eps", "0.5")
    assert code == 0
    rows = list(csv.reader((tmp_path / "report.csv").open()))
    assert rows[0] == ["t", "min_margin"] and len(rows) == 3


def test_stdout_report(capsys):
    assert main(["eig", "--matrix", "[[2]]"]) == 0
    assert json.loads(capsys.readouterr().out)["results"]["spectrum"] == [2.0]


def test_console_entry_point(tmp_path):
    out = tmp_path / "r.json"
    proc = subprocess.run([sys.executable, "-m", "kpsh.cli", "eig", "--matrix", "[[1]]", "--report", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "passed" in proc.stderr
