import json
import subprocess
import sys

import numpy as np
import pytest

from occtl.cli import main

from oracles import output_equilibrium_root


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, json.loads(out) if out.strip() else None


# ---------------------------------------------------------------------------
# loading and usage errors
# ---------------------------------------------------------------------------

def test_unknown_system_is_usage_error(capsys):
    code = main(["simulate", "--system", "nope", "--x0", "1,1"])
    assert code == 2


def test_malformed_system_file(tmp_path, capsys):
    bad = tmp_path / "sys.json"
    bad.write_text('{"name": "b", "n": 2, "m": 1, "f": ["x3", "x1"], "h": ["x1"]}')
    code = main(["simulate", "--system", str(bad), "--x0", "1,1"])
    assert code == 2


def test_system_file_round_trip(tmp_path, capsys):
    doc = {"name": "decay", "n": 1, "m": 1, "f": ["-x1"], "h": ["x1"]}
    path = tmp_path / "decay.json"
    path.write_text(json.dumps(doc))
    code, report = run_cli(capsys, "simulate", "--system", str(path),
                           "--x0", "1", "--tf", "1")
    assert code == 0
    assert report["results"]["final_output"][0] == pytest.approx(
        np.exp(-1.0), abs=1e-7)


def test_unknown_flag_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--system", "lti-remark1", "--bogus", "1"])
    assert exc.value.code == 2


def test_bad_threads_env(capsys, monkeypatch):
    monkeypatch.setenv("OCCTL_THREADS", "many")
    assert main(["jacobian", "--system", "lti-remark1", "--x", "0,0"]) == 2


def test_threads_env_recorded(capsys, monkeypatch):
    monkeypatch.setenv("OCCTL_THREADS", "4")
    code, report = run_cli(capsys, "jacobian", "--system", "lti-remark1",
                           "--x", "0,0")
    assert code == 0
    assert report["threads"] == 4


# ---------------------------------------------------------------------------
# simulate and jacobian
# ---------------------------------------------------------------------------

def test_simulate_writes_csv_and_reports(tmp_path, capsys):
    code, report = run_cli(capsys, "simulate", "--system", "ex2-timeinvariant",
                           "--x0", "3,3", "--tf", "5", "--out", str(tmp_path))
    assert code == 0
    assert report["seed"] == 0
    csv_path = tmp_path / "simulate_ex2-timeinvariant.csv"
    assert csv_path.exists()
    header = csv_path.read_text().splitlines()[0]
    assert header == "t,x1,x2,y1"
    assert (tmp_path / "report.json").exists()


def test_simulate_blowup_exits_3(capsys):
    code, report = run_cli(capsys, "simulate", "--system", "ex1-timevarying",
                           "--x0=-2.5,-5", "--tf", "5")
    assert code == 3
    assert report["results"]["failure"] is not None
    assert report["results"]["t_end"] < 5.0


def test_jacobian_values(capsys):
    code, report = run_cli(capsys, "jacobian", "--system", "lti-remark1",
                           "--x", "1,0", "--t", "0")
    assert code == 0
    res = report["results"]
    assert res["f"] == [-2.0, 1.0]
    assert res["Jf"] == [[-2.0, 1.0], [1.0, -2.0]]
    assert res["Jh"] == [[1.0, 0.0]]


# ---------------------------------------------------------------------------
# check subcommands: exit-code matrix over the built-ins
# ---------------------------------------------------------------------------

def test_contraction_holds_for_lti(capsys):
    code, report = run_cli(capsys, "contraction", "--system", "lti-remark1",
                           "--pairs", "10", "--tf", "10", "--seed", "1")
    assert code == 0
    assert report["results"]["verdict"]["holds"] is True
    assert report["results"]["verdict"]["min_alpha"] >= 0.9


def test_contraction_falsified_for_bad_output(capsys):
    code, report = run_cli(capsys, "contraction", "--system",
                           "lti-remark1-badout", "--pairs", "6", "--tf", "8")
    assert code == 1
    assert report["results"]["verdict"]["witness"] is not None


def test_partial_contraction_falsified_with_equal_output_witness(capsys):
    code, report = run_cli(capsys, "partial", "--system", "lti-remark1",
                           "--pairs", "6", "--tf", "8")
    assert code == 1
    witness = report["results"]["verdict"]["witness"]
    assert witness["dy0"] <= 1e-12


def test_oes_holds_for_time_invariant_demo(capsys):
    code, report = run_cli(capsys, "oes", "--system", "ex2-timeinvariant",
                           "--samples", "8", "--tf", "5")
    assert code == 0
    assert report["results"]["verdict"]["min_alpha"] >= 0.9


def test_oes_eq_time_invariant(capsys):
    y_star = output_equilibrium_root()
    code, report = run_cli(capsys, "oes-eq", "--system", "ex2-timeinvariant",
                           "--y-star", f"{y_star:.12f}", "--pairs", "5",
                           "--box", "1:4,1:4", "--tf", "8")
    assert code == 0


def test_oes_eq_rejects_time_varying(capsys):
    code = main(["oes-eq", "--system", "ex1-timevarying", "--y-star", "0.2"])
    assert code == 2


def test_lyapunov_certificate_passes(capsys):
    code, report = run_cli(
        capsys, "lyapunov", "--system", "ex1-timevarying",
        "--V", "(xi1+xi2)^2", "--alpha1", "1", "--alpha2", "2",
        "--alpha3", "0", "--alpha4", "2", "--p", "2", "--samples", "5000")
    assert code == 0
    checks = report["results"]["checks"]
    assert [c["condition"] for c in checks] == ["sandwich", "decay"]
    assert all(c["passed"] for c in checks)
    assert report["results"]["implied_rate"]["alpha"] == 1.0


def test_lyapunov_overclaimed_rate_falsified(capsys):
    code, report = run_cli(
        capsys, "lyapunov", "--system", "ex1-timevarying",
        "--V", "(xi1+xi2)^2", "--alpha1", "1", "--alpha2", "2",
        "--alpha3", "0", "--alpha4", "12", "--p", "2", "--samples", "5000")
    assert code == 1
    decay = report["results"]["checks"][1]
    assert decay["counterexample"] is not None


def test_lyapunov_time_invariant_form(capsys):
    code, report = run_cli(
        capsys, "lyapunov", "--system", "ex2-timeinvariant",
        "--V", "(xi1+xi2)^2", "--alpha1", "1", "--alpha2", "2",
        "--alpha3", "2", "--p", "2", "--samples", "5000")
    assert code == 0
    assert report["results"]["checks"][0]["condition"] \
        == "time-invariant sandwich+decay"


# ---------------------------------------------------------------------------
# reproductions
# ---------------------------------------------------------------------------

def test_reproduce_fig2(tmp_path, capsys):
    code, report = run_cli(capsys, "reproduce", "fig2", "--out", str(tmp_path))
    assert code == 0
    res = report["results"]
    assert res["output_error"] <= 0.005
    assert res["state_norm_exceeds_1e3_at"] < 10.0
    assert (tmp_path / "fig2_trajectory.csv").exists()


def test_reproduce_fig1(tmp_path, capsys):
    code, report = run_cli(capsys, "reproduce", "fig1", "--tf", "5",
                           "--out", str(tmp_path))
    assert code == 0
    res = report["results"]
    assert res["output_divergence_alpha"] >= 0.9
    assert res["state_distance_over_output_divergence"] > 10.0
    assert (tmp_path / "fig1_divergence.csv").exists()


def test_reproduce_remark1_surfaces_the_falsification(tmp_path, capsys):
    code, report = run_cli(capsys, "reproduce", "remark1",
                           "--out", str(tmp_path))
    assert code == 1
    res = report["results"]
    assert res["output_contraction"]["holds"] is True
    assert res["partial_contraction"]["holds"] is False
    assert res["partial_contraction"]["witness"]["dy0"] <= 1e-12


# ---------------------------------------------------------------------------
# reproducibility of emitted files
# ---------------------------------------------------------------------------

def test_reports_and_series_are_byte_stable(tmp_path, capsys):
    argv = ["contraction", "--system", "lti-remark1", "--pairs", "5",
            "--tf", "6", "--seed", "11", "--dump-series",
            "--out", str(tmp_path)]
    assert main(list(argv)) == 0
    capsys.readouterr()
    first = {p.name: p.read_bytes() for p in tmp_path.iterdir()}
    assert main(list(argv)) == 0
    capsys.readouterr()
    second = {p.name: p.read_bytes() for p in tmp_path.iterdir()}
    assert first == second
    assert "output-contraction_pair_000.csv" in first
    assert "output-contraction_pair_004.csv" in first


def test_console_entry_point_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "occtl", "jacobian", "--system", "lti-remark1",
         "--x", "0,1"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["results"]["Jf"] == [[-2.0, 1.0], [1.0, -2.0]]


def test_contraction_cli_reference_invocation(capsys):
    # the documented reference run: 50 pairs over [-5,5]^2 with seed 7
    code, report = run_cli(capsys, "contraction", "--system",
                           "ex1-timevarying", "--pairs", "50",
                           "--box", " -5:5,-5:5", "--tf", "20", "--seed", "7")
    assert code == 0
    verdict = report["results"]["verdict"]
    assert verdict["holds"] is True
    assert verdict["min_alpha"] >= 0.9
    assert verdict["pairs"] == 50


def test_lyapunov_cli_reference_invocation(capsys):
    # the documented full-scale run: 1e5 samples over [-10,10]^2, t in [0,2pi]
    code, report = run_cli(
        capsys, "lyapunov", "--system", "ex1-timevarying",
        "--V", "(xi1+xi2)^2", "--alpha1", "1", "--alpha2", "2",
        "--alpha3", "0", "--alpha4", "2", "--p", "2",
        "--samples", "100000")
    assert code == 0
    assert all(c["passed"] for c in report["results"]["checks"])
    assert all(c["checked"] >= 100000 for c in report["results"]["checks"])
