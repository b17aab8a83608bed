import json

import numpy as np
import pytest

from cmzlab.cli import ExperimentConfig, main, run
from cmzlab.errors import ConfigError


def write_config(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def test_config_validation_names_fields():
    with pytest.raises(ConfigError, match="'kind'"):
        ExperimentConfig.from_json({"kind": "nope", "seed": 1})
    with pytest.raises(ConfigError, match="'seed'"):
        ExperimentConfig.from_json({"kind": "rv-check", "spec": {"index": 3.0}})
    with pytest.raises(ConfigError, match="'rho'"):
        ExperimentConfig.from_json({"kind": "tower-verify", "seed": 1,
                                    "tail": {"index": 3.0}, "N": 100, "rho": 2.0})
    with pytest.raises(ConfigError, match="'m1'"):
        ExperimentConfig.from_json({"kind": "falling-balls", "seed": 1,
                                    "m1": 1.0, "m2": 2.0, "n_events": 10})


def test_validate_config_command(tmp_path, capsys):
    good = write_config(tmp_path, {"kind": "rv-check", "seed": 3, "spec": {"index": 3.0}})
    assert main(["validate-config", str(good)]) == 0
    bad = write_config(tmp_path, {"kind": "rv-check"}, "bad.json")
    assert main(["validate-config", str(bad)]) == 2


def test_rv_check_recovers_alpha(tmp_path):
    cfg = ExperimentConfig.from_json(
        {"kind": "rv-check", "seed": 5, "spec": {"index": 3.0}, "window": [10.0, 1e5]})
    manifest = run(cfg, tmp_path / "out")
    report = json.loads((tmp_path / "out" / "index_report.json").read_text())
    assert report["alpha_hat"] == pytest.approx(3.0, abs=1e-9)
    assert "index_report.json" in manifest["files"]


def test_tower_verify_sigma_one_ratio_file(tmp_path):
    model_doc = {
        "cells": [{"mass": 0.5, "sigma": 1, "R": [3]},
                  {"mass": 0.3, "sigma": 1, "R": [7]},
                  {"mass": 0.2, "sigma": 1, "R": [12]}],
        "rho": 0.5, "two_sided": False,
    }
    cfg = ExperimentConfig.from_json(
        {"kind": "tower-verify", "seed": 1, "model": model_doc,
         "tail": {"index": 1.0}, "N": 11, "a": 1.0})
    run(cfg, tmp_path / "out")
    rows = (tmp_path / "out" / "ratios.csv").read_text().strip().splitlines()[1:]
    ratios = [float(r.split(",")[2]) for r in rows]
    finite = [r for r in ratios if np.isfinite(r)]
    assert finite and all(r == 1.0 for r in finite)


def test_falling_balls_determinism(tmp_path):
    doc = {"kind": "falling-balls", "seed": 7, "m1": 2.0, "m2": 1.0,
           "n_events": 10**5, "burn_in": 1000, "workers": 2}
    m1 = run(ExperimentConfig.from_json(doc), tmp_path / "a")
    m2 = run(ExperimentConfig.from_json(doc), tmp_path / "b")
    assert {k: v["sha256"] for k, v in m1["files"].items()} == \
        {k: v["sha256"] for k, v in m2["files"].items()}
    doc["seed"] = 8
    m3 = run(ExperimentConfig.from_json(doc), tmp_path / "c")
    assert m1["files"]["fb_tail.csv"]["sha256"] != m3["files"]["fb_tail.csv"]["sha256"]


def test_manifest_lists_every_artifact(tmp_path):
    cfg = ExperimentConfig.from_json(
        {"kind": "curves-diagnostics", "seed": 2, "m_max": 4})
    out = tmp_path / "out"
    manifest = run(cfg, out)
    on_disk = {p.name for p in out.iterdir()} - {"manifest.json"}
    assert set(manifest["files"]) == on_disk


def test_correlation_experiment_artifacts(tmp_path):
    cfg = ExperimentConfig.from_json(
        {"kind": "correlation", "seed": 4, "tail": {"index": 3.0},
         "n_cells": 500, "steps": 2 * 10**6, "max_lag": 10})
    out = tmp_path / "out"
    manifest = run(cfg, out)
    assert "correlation.csv" in manifest["files"]
    assert "predicted.csv" in manifest["files"]
    header = (out / "correlation.csv").read_text().splitlines()[0]
    assert header == "n,estimate,stderr,samples"


def test_acceptance_trivial_suite():
    from cmzlab.acceptance import run_suite

    report = run_suite("trivial")
    assert report.ok
    assert all((r.runtime_s < 60.0) for r in report.results)


def test_acceptance_budget_skips_heavy_criteria(monkeypatch):
    from cmzlab.acceptance import run_suite

    monkeypatch.setenv("CMZLAB_EVENT_BUDGET", "1000")
    report = run_suite("dynamics")
    assert report.ok  # skipped criteria do not fail the suite
    assert all(r.skipped for r in report.results)


def test_budget_clamps_run_and_flags_non_final(tmp_path, monkeypatch):
    monkeypatch.setenv("CMZLAB_EVENT_BUDGET", "50000")
    doc = {"kind": "falling-balls", "seed": 7, "m1": 2.0, "m2": 1.0,
           "n_events": 10**6, "burn_in": 1000, "workers": 1}
    manifest = run(ExperimentConfig.from_json(doc), tmp_path / "out")
    assert manifest["final"] is False
    assert manifest["config"]["n_events"] == 50000


def test_flowers_experiment_artifacts(tmp_path):
    doc = {"kind": "flowers", "seed": 3, "n_events": 2 * 10**5, "workers": 1}
    manifest = run(ExperimentConfig.from_json(doc), tmp_path / "out")
    assert "flowers_table.json" in manifest["files"]
    assert "flowers_tail.csv" in manifest["files"]
