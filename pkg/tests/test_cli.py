import csv
import io
import json
import subprocess
import sys

import pytest

from tasep_lk.cli import FORMAT_VERSION, main, sidecar_path

K1 = ["--alpha", "0.2", "--beta", "0.2", "--omega-a", "0.3", "--omega-d", "0.3"]
K3 = ["--alpha", "0.1", "--beta", "0.1", "--omega-a", "0.3", "--omega-d", "0.1"]
SIM = ["--sites", "100", "--measure-time", "300", "--burn-in", "50",
       "--stationarity-threshold", "1"]


def cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main([str(a) for a in argv], stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def rows(text):
    return list(csv.reader(io.StringIO(text)))


# --- exit codes ----------------------------------------------------------------

@pytest.mark.parametrize("argv", [
    ["profile", *K1[:-1], "0"],
    ["profile", *K1, "--bogus", "1"],
    ["wall", "--alpha", "0.2"],
    ["wall", "--alpha", "0.2", "--beta", "0.2", "--omega-a", "0.1", "--omega-d", "0.3"],
    ["scan", *K3, "--parameter", "gamma", "--start", "0", "--stop", "1"],
    ["simulate", *K1, "--sites", "1"],
    ["nonsense"],
])
def test_invalid_input_exit_two(argv):
    code, _, err = cli(*argv)
    assert code == 2 and err


def test_unresolved_profile_exit_three():
    code, out, _ = cli("profile", "--alpha", "0.45", "--beta", "0.45",
                       "--omega-a", "1", "--omega-d", "1")
    assert code == 3
    diag = json.loads(out)
    assert diag["unresolved"] and "error" in diag


def test_sensitivity_without_wall_exit_four():
    code, out, _ = cli("sensitivity", "--alpha", "0.6", "--beta", "0.3",
                       "--omega-a", "0.3", "--omega-d", "0.1")
    assert code == 4 and json.loads(out)["reports"] == []


def test_scan_without_wall_exit_four():
    code, *_ = cli("scan", "--alpha", "0.6", "--beta", "0.3", "--omega-a", "0.3",
                   "--omega-d", "0.1", "--parameter", "beta", "--start", "0.1", "--stop", "0.4")
    assert code == 4


# --- profile -------------------------------------------------------------------

def test_profile_k_one_rows():
    code, out, err = cli("profile", *K1, "--points", "5")
    assert code == 0
    table = rows(out)
    assert table[0] == ["x", "rho", "branch"]
    assert len(table) == 7
    assert [r[0] for r in table[1:]] == ["0.0", "0.25", "0.5", "0.5", "0.75", "1.0"]
    assert [r[2] for r in table[1:]] == ["left"] * 3 + ["right"] * 3
    meta = json.loads(err)
    assert meta["format_version"] == FORMAT_VERSION and meta["config"]["points"] == 5


def test_profile_case_three(tmp_path):
    path = tmp_path / "p.csv"
    code, *_ = cli("profile", "--alpha", "0.6", "--beta", "0.3", "--omega-a", "0.3",
                   "--omega-d", "0.1", "--points", "11", "--output", path)
    assert code == 0
    assert len({r[2] for r in rows(path.read_text())[1:]}) == 1
    meta = json.loads(sidecar_path(path).read_text())
    assert meta["regime"] == "CaseIII" and meta["wall"] is None


def test_profile_json_rows():
    code, out, _ = cli("profile", *K1, "--points", "5", "--format", "json")
    body = json.loads(out)
    assert code == 0 and len(body["rows"]) == 6 and body["K"] == 1.0


def test_profile_floats_round_trip():
    _, out, _ = cli("profile", *K3, "--points", "7")
    for x, rho, _ in rows(out)[1:]:
        assert repr(float(rho)) == rho


# --- wall / exist ----------------------------------------------------------------

def test_wall_k_one():
    code, out, _ = cli("wall", *K1)
    body = json.loads(out)
    assert code == 0 and body["exists"]
    assert body["x_s"] == 0.5 and body["height"] == pytest.approx(0.3, abs=1e-15)


def test_wall_absent_has_null_fields():
    code, out, _ = cli("exist", "--alpha", "0.1", "--beta", "0.3", "--omega-a", "0.1",
                       "--omega-d", "0.1")
    body = json.loads(out)
    assert code == 0 and body["command"] == "exist"
    assert body["exists"] is False and body["x_s"] is None and body["residual"] is None


def test_wall_k_three_residual():
    body = json.loads(cli("wall", *K3)[1])
    assert body["exists"] and body["residual"] <= 1e-10


# --- sensitivity / scan -----------------------------------------------------------

def test_sensitivity_k_one_symmetric():
    code, out, _ = cli("sensitivity", *K1)
    reports = {r["parameter"]: r for r in json.loads(out)["reports"]}
    assert code == 0 and "K" not in reports
    assert reports["omega_d"]["analytic_xs"] == pytest.approx(0.0, abs=1e-12)


def test_sensitivity_parameter_subset():
    code, out, _ = cli("sensitivity", *K3, "--parameters", "alpha,K")
    reports = json.loads(out)["reports"]
    assert code == 0 and [r["parameter"] for r in reports] == ["alpha", "K"]
    assert reports[0]["flags"]


def test_scan_row_one(tmp_path):
    path = tmp_path / "scan.csv"
    code, *_ = cli("scan", "--alpha", "0.2", "--beta", "0.3", "--omega-a", "0.25",
                   "--omega-d", "0.05", "--parameter", "omega_d", "--start", "0.02",
                   "--stop", "0.11", "--steps", "20", "--output", path)
    assert code == 0
    table = rows(path.read_text())
    assert table[0] == ["param_value", "x_s", "height", "note"] and len(table) == 21
    meta = json.loads(sidecar_path(path).read_text())
    assert meta["classification"] == {"x_s": "decreasing", "height": "increasing"}
    assert meta["held"] == "K held fixed"


def test_scan_annotates_missing_walls():
    code, out, err = cli("scan", *K3, "--parameter", "alpha", "--start", "0.0",
                         "--stop", "0.6", "--steps", "13")
    notes = [r[3] for r in rows(out)[1:]]
    assert code == 0 and "no_wall" in notes and "" in notes
    assert json.loads(err)["n_no_wall"] == notes.count("no_wall")


# --- simulate / compare ----------------------------------------------------------

def test_simulate_reproducible(tmp_path):
    a, b, c = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "c.csv"
    assert cli("simulate", *K1, *SIM, "--seed", "7", "--output", a)[0] == 0
    assert cli("simulate", *K1, *SIM, "--seed", "7", "--output", b)[0] == 0
    assert cli("simulate", *K1, *SIM, "--seed", "8", "--output", c)[0] == 0
    assert a.read_text() == b.read_text()
    assert a.read_text() != c.read_text()
    meta = json.loads(sidecar_path(a).read_text())
    assert meta["seed"] == 7 and meta["lattice"]["n_sites"] == 100
    assert meta["rng_algorithm"].startswith("PCG64")


def test_simulate_nonstationary_exit(tmp_path):
    code, _, err = cli("simulate", *K3, "--sites", "100", "--measure-time", "100",
                       "--burn-in", "1", "--initial", "full",
                       "--stationarity-threshold", "0.01", "--output", tmp_path / "s.csv")
    assert code == 5 and "stationary" in err


def test_compare_from_input(tmp_path):
    sim = tmp_path / "s.csv"
    cli("simulate", *K1, *SIM, "--output", sim)
    code, out, _ = cli("compare", "--input", sim)
    body = json.loads(out)
    assert code == 0
    assert set(body) >= {"sup_norm", "l1", "wall_site_x", "wall_gap", "excluded_halfwidth"}
    assert body["config"]["alpha"] == 0.2
    # parameters that disagree with the simulation are rejected
    assert cli("compare", "--input", sim, "--alpha", "0.3")[0] == 2


# --- config files ------------------------------------------------------------------

@pytest.mark.parametrize("argv", [
    ["profile", *K3, "--points", "9"],
    ["wall", *K3],
    ["exist", *K1],
    ["sensitivity", *K3, "--parameters", "alpha,beta"],
    ["scan", *K3, "--parameter", "K", "--start", "3", "--stop", "5", "--steps", "5"],
    ["simulate", *K1, *SIM, "--seed", "3"],
])
def test_config_round_trip(tmp_path, argv):
    first = tmp_path / "first"
    second = tmp_path / "second"
    assert cli(*argv, "--output", first)[0] == 0
    echoed = sidecar_path(first) if sidecar_path(first).exists() else first
    assert cli(argv[0], "--config", echoed, "--output", second)[0] == 0
    assert first.read_text() == second.read_text()


def test_flags_override_config(tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"alpha": 0.2, "beta": 0.2, "omega_a": 0.3, "omega_d": 0.3}))
    body = json.loads(cli("wall", "--config", conf, "--alpha", "0.1", "--beta", "0.3",
                          "--omega-a", "0.4", "--omega-d", "0.4")[1])
    assert body["config"]["alpha"] == 0.1
    assert body["x_s"] == pytest.approx(0.75, abs=1e-14)


def test_config_rejects_unknown_keys(tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"alpha": 0.2, "beta": 0.2, "omega_a": 0.3, "omega_d": 0.3,
                                "gamma": 1}))
    code, _, err = cli("wall", "--config", conf)
    assert code == 2 and "gamma" in err


def test_config_rejects_other_command(tmp_path):
    path = tmp_path / "w.json"
    cli("wall", *K1, "--output", path)
    assert cli("profile", "--config", path)[0] == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "tasep_lk", "wall", *K1],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and json.loads(proc.stdout)["exists"]
