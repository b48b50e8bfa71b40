import json

import pytest

from adsched.cli import main
from adsched.config import load_bundle
from adsched.errors import ConfigError

from .conftest import M2_RAW


@pytest.fixture
def m2_file(tmp_path):
    path = tmp_path / "m2.json"
    path.write_text(json.dumps(M2_RAW))
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_bundle_with_referenced_model(tmp_path, m2_file):
    doc = {"model": "m2.json", "policy": {"kind": "threshold", "tau": 2},
           "simulation": {"lambda": 0.3, "horizon": 1000}}
    path = tmp_path / "bundle.json"
    path.write_text(json.dumps(doc))
    bundle = load_bundle(path)
    assert bundle.model.n_s == 2 and bundle.tau == 2
    assert bundle.policy.work_prob(1, "A", 5) == 1.0
    assert bundle.simulation["lambda"] == 0.3


def test_table_policy(tmp_path):
    doc = {"model": M2_RAW, "policy": {"kind": "table", "q_cap": 2, "available": [[0.5, 1.0], [0.0, 0.0]]}}
    path = tmp_path / "b.json"
    path.write_text(json.dumps(doc))
    bundle = load_bundle(path)
    assert bundle.tau is None and bundle.policy.work_prob(1, "A", 9) == 1.0


@pytest.mark.parametrize("doc, field", [
    ({"model": {"n_s": 1, "mu": {"1": 1.0}}}, "model.mu"),
    ({"model": M2_RAW, "policy": {"kind": "bogus"}}, "policy.kind"),
    ({"model": M2_RAW, "policy": {"kind": "threshold", "tau": 9}}, "policy.tau"),
    ({"nothing": 1}, "model"),
])
def test_config_errors_name_the_field(tmp_path, doc, field):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(ConfigError) as err:
        load_bundle(path)
    assert err.value.field.startswith(field)


def test_analyze(tmp_path, m2_file, capsys):
    code, out, _ = run(capsys, "analyze", "--model", m2_file, "--out", tmp_path / "o")
    assert code == 0
    summary = json.loads((tmp_path / "o" / "analyze_summary.json").read_text())
    assert summary["lambda_star"] == pytest.approx(0.36, abs=1e-12) and summary["tau_star"] == 2
    assert set(summary["sweep"][1]["pmf"]) == {"(1,A)", "(1,B)", "(2,A)", "(2,B)"}
    rows = (tmp_path / "o" / "analyze_sweep.csv").read_text().splitlines()
    assert rows[0] == "tau,nu_bar" and len(rows) == 4


def test_analyze_single_state(tmp_path, capsys):
    path = tmp_path / "m1.json"
    path.write_text(json.dumps({"n_s": 1, "mu": {"1": 0.5}}))
    assert run(capsys, "analyze", "--model", path, "--out", tmp_path, "--format", "csv")[0] == 0
    assert len((tmp_path / "analyze_sweep.csv").read_text().splitlines()) == 3
    assert not (tmp_path / "analyze_summary.json").exists()


def test_malformed_model_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"n_s": 2, "rho_up": {}, "rho_down": {"2": 0.5}, "mu": {"1": 0.5, "2": 0.5}}))
    code, _, err = run(capsys, "analyze", "--model", path, "--out", tmp_path)
    assert code == 2 and "rho_up" in err
    path.write_text("{not json")
    assert run(capsys, "analyze", "--model", path, "--out", tmp_path)[0] == 2
    assert run(capsys, "analyze", "--model", tmp_path / "missing.json", "--out", tmp_path)[0] == 2


def test_enumerate(tmp_path, m2_file, capsys):
    assert run(capsys, "enumerate", "--model", m2_file, "--out", tmp_path)[0] == 0
    doc = json.loads((tmp_path / "enumerate.json").read_text())
    assert doc["lambda_double_star"] == pytest.approx(0.36) and doc["policies_evaluated"] == 4
    assert doc["gap"] <= 1e-9


def test_enumerate_too_large(tmp_path, capsys):
    path = tmp_path / "big.json"
    path.write_text(json.dumps({"n_s": 30, "rho_up": [0.5] * 29, "rho_down": [0.5] * 29, "mu": [0.5] * 30}))
    code, _, err = run(capsys, "enumerate", "--model", path, "--out", tmp_path)
    assert code == 3 and "cap" in err


def test_simulate_poisson_conversion(tmp_path, m2_file, capsys):
    code, _, _ = run(capsys, "simulate", "--model", m2_file, "--out", tmp_path, "--poisson-rate", "3.0",
                     "--delta", "0.1", "--horizon", "2000", "--replications", "2", "--path-stride", "500")
    assert code == 0
    doc = json.loads((tmp_path / "simulate.json").read_text())
    assert doc["lambda"] == pytest.approx(0.3)
    assert doc["policy"] == {"kind": "threshold", "tau": 2}
    assert (tmp_path / "queue_path_rep1.csv").read_text().startswith("epoch,q\n0,0\n")


@pytest.mark.parametrize("flags", [
    ["--lambda", "1.2"],
    ["--poisson-rate", "12", "--delta", "0.1"],
    ["--poisson-rate", "3"],
    ["--lambda", "0.3", "--tau", "7"],
    [],
])
def test_simulate_bad_rate_exit_code(tmp_path, m2_file, capsys, flags):
    assert run(capsys, "simulate", "--model", m2_file, "--out", tmp_path, *flags)[0] == 2


def test_validate_only_and_tolerance(tmp_path, m2_file, capsys):
    code, out, _ = run(capsys, "validate", "--model", m2_file, "--out", tmp_path, "--only", "lemma3")
    assert code == 0 and out.count("PASS") == 1 and "lemma3" in out
    code, out, _ = run(capsys, "validate", "--model", m2_file, "--out", tmp_path, "--only", "lemma3",
                       "--tol", "lemma3=0")
    assert code == 1 and out.startswith("FAIL lemma3: measured=")
    doc = json.loads((tmp_path / "validate.json").read_text())
    assert doc["properties"][0]["tolerance"] == 0.0 and doc["passed"] is False
    assert run(capsys, "validate", "--model", m2_file, "--out", tmp_path, "--only", "nope")[0] == 2
