"""End-to-end fidelity: the builder's inference must agree with driving the
engine CLI by hand on the same data, to 1e-9, across seeded fixtures."""

import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from selpipe_builder import PipelineManager
from selpipe_builder.runtime import write_dataset_csv

from test_builder import (
    OPTION1_FIXTURE,
    _option1_multi,
    _option2_multi,
    option1_flow,
    option2_flow,
)


def draw(seed, n=60, d=8, missing=0.05):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    y = rng.standard_normal(n)
    y[rng.random(n) < missing] = np.nan
    return X, y


def cli_report(tmp_path, X, y, pipeline_config=None, cv_payload=None,
               sigma=1.0, extra=()):
    data = tmp_path / "data.csv"
    write_dataset_csv(data, X, y)
    out = tmp_path / "out.json"
    args = [sys.executable, "-m", "selpipe", "infer", "--data", str(data),
            "--out", str(out)]
    if pipeline_config is not None:
        cfg = tmp_path / "pipeline.json"
        cfg.write_text(json.dumps(pipeline_config), encoding="utf-8")
        args += ["--pipeline", str(cfg)]
    else:
        cfg = tmp_path / "cv.json"
        cfg.write_text(json.dumps(cv_payload), encoding="utf-8")
        args += ["--cv", str(cfg)]
    if "--select-only" not in extra:
        args += ["--sigma", repr(float(sigma))]
    args += list(extra)
    proc = subprocess.run(args, capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return json.loads(out.read_text(encoding="utf-8"))


@pytest.mark.parametrize("seed", range(10))
def test_inference_matches_cli_on_seeded_fixtures(seed, tmp_path):
    X, y = draw(seed)
    manager = option1_flow() if seed % 2 == 0 else option2_flow()
    features, p_values = manager.inference(X, y, sigma=1.0)

    config = manager.configs[0]
    report = cli_report(tmp_path, X, y, pipeline_config=config)
    assert features == [f["id"] for f in report["features"]]
    cli_p = [f["p_selective"] for f in report["features"]]
    assert len(p_values) == len(cli_p)
    for ours, ref in zip(p_values, cli_p):
        assert abs(ours - ref) <= 1e-9


def test_tune_matches_cli_selection(tmp_path):
    X, y = draw(123, n=50, d=6)
    manager = _option1_multi() | _option2_multi()
    assert len(manager) == 32
    best = manager.tune(X, y, num_folds=2)
    payload = {"candidates": manager.configs, "folds": 2, "seed": 0}
    report = cli_report(tmp_path, X, y, cv_payload=payload,
                        extra=("--select-only",))
    assert best == report["selected_pipeline"]
    assert len(report["cv_errors"]) == 32


def test_tuned_inference_conditions_on_the_choice(tmp_path):
    X, y = draw(7, n=50, d=6)
    manager = PipelineManager([OPTION1_FIXTURE]) | PipelineManager([
        json.loads(json.dumps(OPTION1_FIXTURE).replace("0.08", "0.12"))
    ])
    manager.tune(X, y, num_folds=2)
    features, p_values = manager.inference(X, y, sigma=1.0)
    payload = {"candidates": manager.configs, "folds": 2, "seed": 0}
    report = cli_report(tmp_path, X, y, cv_payload=payload)
    assert features == [f["id"] for f in report["features"]]
    for ours, ref in zip(p_values,
                         [f["p_selective"] for f in report["features"]]):
        assert abs(ours - ref) <= 1e-9
    assert manager.best_index_ == report["selected_pipeline"]


def test_estimated_sigma_supported(tmp_path):
    X, y = draw(55, n=70, d=5)
    manager = option1_flow()
    features, p_values = manager.inference(X, y, sigma=None)
    data = tmp_path / "d2.csv"
    write_dataset_csv(data, X, y)
    cfg = tmp_path / "p2.json"
    cfg.write_text(json.dumps(manager.configs[0]), encoding="utf-8")
    out = tmp_path / "o2.json"
    proc = subprocess.run(
        [sys.executable, "-m", "selpipe", "infer", "--data", str(data),
         "--pipeline", str(cfg), "--estimate-sigma", "--out", str(out)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    ref = json.loads(out.read_text(encoding="utf-8"))
    for ours, theirs in zip(p_values,
                            [f["p_selective"] for f in ref["features"]]):
        assert abs(ours - theirs) <= 1e-9
