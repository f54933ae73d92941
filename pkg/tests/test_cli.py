import csv
import json

import pytest

from supou.cli import EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_OK, main


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_simulate_is_reproducible(tmp_path):
    args = ["simulate", "--seed", "4", "-N", "300", "--set", "pi.B=-1", "--set", "pi.alpha_pi=4"]
    assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(args + ["--out", str(tmp_path / "b")]) == EXIT_OK
    for name in ("series.csv", "series.meta.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    meta = json.loads((tmp_path / "a" / "series.meta.json").read_text())
    assert meta["truncation_horizon"] == pytest.approx(99.0)
    assert meta["theta0"] == {"mu": 1.0, "sigma2": 2.0, "alpha_pi": 4.0, "B": -1.0}


def test_simulate_returns_with_volatility(tmp_path):
    assert main(["simulate", "--seed", "1", "-N", "50", "--kind", "returns", "--out", str(tmp_path)]) == EXIT_OK
    assert set(_rows(tmp_path / "series.csv")[0]) == {"t", "Y", "V"}


def test_usage_errors(tmp_path):
    assert main(["simulate", "--seed", "1", "-N", "0", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["simulate", "-N", "10", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["montecarlo", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["moments", "--set", "pi.alpha_pi=1.5", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["moments", "--set", "nonsense", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["bogus"]) == EXIT_CONFIG


def test_io_errors(tmp_path):
    assert main(["estimate", "--input", str(tmp_path / "missing.csv"), "--out", str(tmp_path)]) == EXIT_IO
    assert main(["moments", "--config", str(tmp_path / "nope.ini"), "--out", str(tmp_path)]) == EXIT_IO


def test_numeric_failure(tmp_path):
    assert main(["moments", "--sigma", "--set", "pi.alpha_pi=2.01", "--out", str(tmp_path)]) == EXIT_NUMERIC


def test_moments_reference(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("m = 3\n[pi]\nB = -1\nalpha_pi = 4\n")
    assert main(["moments", "--config", str(cfg), "--sigma", "--out", str(tmp_path)]) == EXIT_OK
    rows = {(r["model"], r["quantity"]): float(r["value"]) for r in _rows(tmp_path / "moments.csv")}
    assert rows[("supou", "D(1)")] == pytest.approx(0.0416667, abs=1e-6)
    assert rows[("returns", "Var(Y^2)")] == pytest.approx(0.722222, abs=1e-6)
    assert len(_rows(tmp_path / "jacobian.csv")) == 5
    assert len(_rows(tmp_path / "sigma.csv")) == 5
    assert "pi.B = -1" in (tmp_path / "config.used").read_text()


def test_flags_override_file(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("m = 3\n")
    assert main(["moments", "--config", str(cfg), "--set", "m=2", "--out", str(tmp_path)]) == EXIT_OK
    assert len(_rows(tmp_path / "jacobian.csv")) == 4


def test_weakdep_report(tmp_path):
    assert main(["weakdep", "--out", str(tmp_path)]) == EXIT_OK
    from supou.weakdep import GATE_CATALOG

    gates = _rows(tmp_path / "gates.csv")
    assert [g["theorem"] for g in gates] == list(GATE_CATALOG)
    coef = _rows(tmp_path / "coefficients.csv")
    assert len(coef) == 101
    assert main(["weakdep", "--variant", "zero_mean", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["weakdep", "--variant", "returns", "--out", str(tmp_path)]) == EXIT_OK


def test_estimate_smoke(tmp_path):
    assert main(["simulate", "--seed", "9", "-N", "5000", "--out", str(tmp_path)]) == EXIT_OK
    assert main(["estimate", "--input", str(tmp_path / "series.csv"), "--out", str(tmp_path)]) == EXIT_OK
    est = _rows(tmp_path / "estimate.csv")
    assert [r["parameter"] for r in est] == ["mu", "sigma2", "alpha_pi", "B"]
    report = (tmp_path / "report.txt").read_text()
    assert "asy_mom1" in report and "config:" in report


def test_montecarlo_minimal(tmp_path):
    args = ["montecarlo", "--seed", "3", "--replications", "2", "-N", "1000", "--workers", "1", "--out", str(tmp_path)]
    assert main(args) == EXIT_OK
    assert len(_rows(tmp_path / "replications.csv")) == 2
    summary = _rows(tmp_path / "summary.csv")
    assert [r["parameter"] for r in summary] == ["mu", "sigma2", "alpha_pi", "B"]
    assert "config:" in (tmp_path / "report.txt").read_text()


def test_figures(tmp_path):
    pytest.importorskip("matplotlib")
    assert main(["simulate", "--seed", "2", "-N", "100", "--figures", "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "series.png").read_bytes()[:4] == b"\x89PNG"
