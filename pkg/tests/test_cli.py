import json
import subprocess
import sys

import numpy as np
import jsonschema
import pytest

from isocurv.cli import main
from isocurv.formats import read_matrix_csv, write_json, write_matrix_csv

SCHEMAS = {
    "diagnostics.json": "diagnostics.schema.json",
    "certificate.json": "certificate.schema.json",
    "property_report.json": "property_report.schema.json",
    "manifest.json": "manifest.schema.json",
}


@pytest.fixture
def inputs(tmp_path):
    d = tmp_path / "in"
    d.mkdir()
    write_matrix_csv(d / "eye.csv", np.eye(2))
    write_matrix_csv(d / "diag.csv", np.diag([2.0, 1.0]))
    write_json(d / "quartic.json", {"variant": "quartic", "c": 1.0})
    write_json(d / "power.json", {"variant": "power", "c": 1.0, "alpha": 0.39})
    write_json(d / "kink.json", {"variant": "kink", "A": 0.0, "B": 400.0, "r_tilde": 1.0})
    write_json(d / "quad_oracle.json", {"variant": "quadratic"})
    write_json(d / "power_oracle.json", {"variant": "pure_power", "p": 4})
    return d


def run(*argv):
    return main([str(a) for a in argv])


def validate_outputs(out, load_schema, summary_schema=None):
    for f in out.glob("*.json"):
        name = SCHEMAS.get(f.name, summary_schema)
        jsonschema.validate(json.loads(f.read_text()), load_schema(name))


def test_solve_quartic_identity(inputs, tmp_path, load_schema):
    out = tmp_path / "out"
    assert run("solve", "--gradient", inputs / "eye.csv", "--curvature", inputs / "quartic.json",
               "--out-dir", out) == 0
    np.testing.assert_allclose(read_matrix_csv(out / "sigma_star.csv")[:, 0], 2 ** (-1 / 3), atol=1e-6)
    assert read_matrix_csv(out / "q_star.csv").shape == (2, 2)
    diag = json.loads((out / "diagnostics.json").read_text())
    assert diag["path"] == "quartic-fixed-point"
    assert diag["homogenization_report"]["passed"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 0 and manifest["subcommand"] == "solve"
    assert set(manifest["outputs"]) == {p.name for p in out.iterdir()}
    validate_outputs(out, load_schema)


def test_solve_sampled_path(inputs, tmp_path, load_schema):
    out = tmp_path / "out"
    assert run("solve", "--gradient", inputs / "diag.csv", "--curvature", inputs / "power.json",
               "--samples", 20000, "--threads", 2, "--out-dir", out) == 0
    diag = json.loads((out / "diagnostics.json").read_text())
    assert diag["path"] == "generic-projected-gradient"
    assert diag["homogenization_report"]["passed"]
    validate_outputs(out, load_schema)


def test_malformed_csv_exit_3(inputs, tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("2,2\n1,2\n3\n")
    assert run("solve", "--gradient", bad, "--curvature", inputs / "quartic.json",
               "--out-dir", tmp_path / "o") == 3
    assert "error" in capsys.readouterr().err


def test_invalid_kink_exit_3(inputs, tmp_path, capsys):
    write_json(tmp_path / "k.json", {"variant": "kink", "A": 2.0, "B": 1.0, "r_tilde": 1.0})
    assert run("solve", "--gradient", inputs / "diag.csv", "--curvature", tmp_path / "k.json",
               "--out-dir", tmp_path / "o") == 3
    assert "B > A" in capsys.readouterr().err


def test_divergence_exit_2(inputs, tmp_path):
    write_json(tmp_path / "flat.json", {"variant": "tabulated", "radii": [1.0, 2.0], "values": [0.1, 0.2]})
    assert run("solve", "--gradient", inputs / "diag.csv", "--curvature", tmp_path / "flat.json",
               "--samples", 5000, "--acknowledge-nonhomogenizing", "--out-dir", tmp_path / "o") == 2


@pytest.mark.parametrize("oracle,expected,tol", [
    ("quad_oracle.json", 2.0, 0.01),
    ("power_oracle.json", 4.0, 0.05),
])
def test_probe_oracles(inputs, tmp_path, load_schema, oracle, expected, tol):
    out = tmp_path / "out"
    assert run("probe", "--oracle", inputs / oracle, "--out-dir", out) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert abs(summary["fitted_exponent"] - expected) <= tol
    header = (out / "probe.csv").read_text().splitlines()[0]
    assert header == "radius,mean_remainder_over_r2,q10,q50,q90,n_samples"
    validate_outputs(out, load_schema, "probe_summary.schema.json")


def test_probe_bad_window_exit_3(inputs, tmp_path):
    write_json(tmp_path / "cfg.json", {"fit_window": [1.0, 100.0]})
    assert run("probe", "--oracle", inputs / "quad_oracle.json", "--config", tmp_path / "cfg.json",
               "--out-dir", tmp_path / "o") == 3


def test_certify_variants(inputs, tmp_path, load_schema):
    cases = {
        "smooth": ("diag.csv", "quartic.json"),
        "kink": ("diag.csv", "kink.json"),
        "orth": ("eye.csv", "quartic.json"),
    }
    reports = {}
    for key, (g, h) in cases.items():
        out = tmp_path / key
        assert run("certify", "--gradient", inputs / g, "--curvature", inputs / h, "--out-dir", out) == 0
        validate_outputs(out, load_schema)
        reports[key] = json.loads((out / "certificate.json").read_text())
    assert reports["smooth"]["converse"]["gap"] >= 0.25 - 1e-12
    assert reports["kink"]["kink"]["feasible"]
    assert reports["orth"]["converse"]["gap"] <= 1e-8
    assert all(r["alignment"]["gap"] <= 1e-8 for r in reports.values())


def test_certify_wide_kink_is_unsupported_not_an_error(inputs, tmp_path):
    write_matrix_csv(tmp_path / "wide.csv", np.array([[1.0, 0.0, 0.5]]))
    out = tmp_path / "o"
    assert run("certify", "--gradient", tmp_path / "wide.csv", "--curvature", inputs / "kink.json",
               "--out-dir", out) == 0
    report = json.loads((out / "certificate.json").read_text())
    assert report["kink"] is None and "kink" in report["unsupported"]


def test_compare(inputs, tmp_path, load_schema):
    out = tmp_path / "out"
    assert run("compare", "--gradient", inputs / "diag.csv", "--curvature", inputs / "quartic.json",
               "--out-dir", out) == 0
    rows = (out / "compare.csv").read_text().splitlines()
    assert rows[0] == "rule,gamma,realized_decrease" and len(rows) == 1 + 4 * 25
    validate_outputs(out, load_schema, "compare_summary.schema.json")


def test_check_and_injection(tmp_path, load_schema):
    assert run("check", "--sizes", 4, "--count", 3, "--out-dir", tmp_path / "ok") == 0
    assert run("check", "--sizes", 4, "--count", 2, "--inject", "converse_gap",
               "--out-dir", tmp_path / "bad") == 1
    report = json.loads((tmp_path / "bad" / "property_report.json").read_text())
    assert [p["name"] for p in report["properties"] if not p["passed"]] == ["converse_gap"]
    validate_outputs(tmp_path / "ok", load_schema)
    assert run("check", "--inject", "nope", "--out-dir", tmp_path / "x") == 3


def test_outputs_stay_in_out_dir(inputs, tmp_path):
    before = {p for p in tmp_path.rglob("*")}
    out = tmp_path / "nested" / "out"
    assert run("solve", "--gradient", inputs / "eye.csv", "--curvature", inputs / "quartic.json",
               "--out-dir", out) == 0
    new = {p for p in tmp_path.rglob("*")} - before
    assert all(p == out or p == out.parent or out in p.parents for p in new)


def test_module_entry_point(inputs, tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "isocurv", "solve", "--gradient", str(inputs / "eye.csv"),
         "--curvature", str(inputs / "quartic.json"), "--out-dir", str(tmp_path / "o")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
