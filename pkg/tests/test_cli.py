import json

import pytest

from qsmlab import io
from qsmlab.cli import CONFIG_ERROR, SOLVER_ERROR, apply_overrides, load_config, main

SMALL_CIRCLE = ["--override", "grid.cells=64", "--override", "quadrature_m=4",
                "--override", "partition.tau_list=[1]", "--override", "partition.coarseness_list=[8]",
                "--override", "entropy.n_max=4", "--override", "simulate.trials=50",
                "--override", "verify.checks=[\"support\", \"k_vs_q\"]"]


def run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path)])


def write_cfg(tmp_path, doc):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(doc))
    return str(p)


FIN3 = {"system": {"family": "fin3"}, "partition": {"tau_list": [1, 2], "coarseness_list": [1]},
        "entropy": {"n_max": 6}}


def test_qsm_command_writes_files(tmp_path):
    assert run(tmp_path, "qsm", "--config", write_cfg(tmp_path, FIN3)) == 0
    _, eta = io.read_qsm_csv(tmp_path / "qsm.csv")
    assert eta == pytest.approx([0.618034, 0.381966], abs=1e-6)
    assert io.read_json(tmp_path / "config.json")["system"]["family"] == "fin3"
    assert io.read_json(tmp_path / "summary.json")["rho"] == pytest.approx(0.809017, abs=1e-6)


def test_control_sets_command(tmp_path):
    assert run(tmp_path, "control-sets", "--config", write_cfg(tmp_path, FIN3)) == 0
    sets = io.read_controlsets_csv(tmp_path / "controlsets.csv")
    assert [s.cells for s in sets] == [(0, 1)]


def test_entropy_command_log_base(tmp_path):
    cfg = write_cfg(tmp_path, FIN3)
    assert run(tmp_path / "e", "entropy", "--config", cfg) == 0
    assert run(tmp_path / "b", "entropy", "--config", cfg, "--log-base", "2") == 0
    he = io.read_entropy_csv(tmp_path / "e" / "entropy.csv")
    hb = io.read_entropy_csv(tmp_path / "b" / "entropy.csv")
    key = next(iter(he))
    assert hb[key]["H"][1] == pytest.approx(he[key]["H"][1] / 0.6931471805599453)
    assert (tmp_path / "e" / "words.csv").exists()


def test_blocked_entropy_is_infinity(tmp_path):
    cfg = write_cfg(tmp_path, {**FIN3, "system": {"family": "fin3_blocked"}})
    assert run(tmp_path, "entropy", "--config", cfg) == 0
    assert "infinity" in (tmp_path / "entropy.csv").read_text()


def test_verify_exit_code_counts_failures(tmp_path):
    cfg = write_cfg(tmp_path, {**FIN3, "verify": {"checks": ["support", "k_vs_q", "theorem_b"]}})
    assert run(tmp_path, "verify", "--config", cfg) == 0
    doc = io.read_json(tmp_path / "reports.json")
    assert doc["counts"] == {"pass": 3, "fail": 0, "skipped": 0}
    # coarseness 2 is a single element with deficient mass: the comparison check fails
    code = run(tmp_path, "verify", "--config", cfg, "--override", "partition.coarseness_list=[2]",
               "--override", "verify.checks=[\"comparison\"]")
    assert code == 1


@pytest.mark.parametrize("override", ["qsm.max_iter=0", "grid.cells=-3", "nope=1", "partition.tau_list=[0]",
                                      "system.family=\"moon\""])
def test_config_errors(tmp_path, override):
    assert run(tmp_path, "qsm", "--config", write_cfg(tmp_path, FIN3), "--override", override) == CONFIG_ERROR


def test_missing_config_and_bad_command(tmp_path):
    assert run(tmp_path, "qsm", "--config", str(tmp_path / "missing.json")) == CONFIG_ERROR
    assert main(["bogus"]) == CONFIG_ERROR
    assert run(tmp_path, "qsm", "ex1") == CONFIG_ERROR
    assert run(tmp_path, "example") == CONFIG_ERROR


def test_word_budget_is_config_error(tmp_path):
    cfg = write_cfg(tmp_path, {**FIN3, "partition": {"tau_list": [20], "coarseness_list": [1]}})
    assert run(tmp_path, "entropy", "--config", cfg) == CONFIG_ERROR


def test_solver_failure(tmp_path):
    cfg = write_cfg(tmp_path, FIN3)
    assert run(tmp_path, "qsm", "--config", cfg, "--override", "qsm.max_iter=2",
               "--override", "qsm.tol=1e-300") == SOLVER_ERROR


def test_thread_env(tmp_path, monkeypatch):
    cfg = write_cfg(tmp_path, FIN3)
    monkeypatch.setenv("QSMLAB_THREADS", "1")
    assert run(tmp_path / "a", "entropy", "--config", cfg) == 0
    monkeypatch.delenv("QSMLAB_THREADS")
    assert run(tmp_path / "b", "entropy", "--config", cfg) == 0
    assert (tmp_path / "a" / "entropy.csv").read_text() == (tmp_path / "b" / "entropy.csv").read_text()
    monkeypatch.setenv("QSMLAB_THREADS", "zero")
    assert run(tmp_path / "c", "entropy", "--config", cfg) == CONFIG_ERROR


def test_overrides_parse_json_values():
    doc = apply_overrides({}, ["grid.cells=64", "system.family=circle2", "partition.tau_list=[1, 2]"])
    assert doc == {"grid": {"cells": 64}, "system": {"family": "circle2"}, "partition": {"tau_list": [1, 2]}}
    cfg = load_config(None, ["grid.cells=64"])
    assert cfg.grid.cells == 64


def test_example_regime_mismatch_is_reported(tmp_path):
    run(tmp_path, "example", "ex1", *SMALL_CIRCLE, "--override", "system.alpha=0.03")
    text = (tmp_path / "summary.txt").read_text()
    assert "regime mismatch" in text
    claims = io.read_json(tmp_path / "summary.json")["claims"]
    assert claims["regime"]["above_tangency"] is False


def test_example_small_grid_runs(tmp_path):
    code = run(tmp_path, "example", "ex2", *SMALL_CIRCLE)
    for name in ("qsm.csv", "controlsets.csv", "words.csv", "entropy.csv", "reports.json", "summary.json",
                 "summary.txt", "config.json"):
        assert (tmp_path / name).exists(), name
    assert code >= 0
