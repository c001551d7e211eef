"""Bridge to the engine: array serialization and command-line invocation.

The builder owns no numerics.  Datasets go out as CSV (full ``repr``
precision, so values survive the round trip bit-exactly), pipelines as the
engine's JSON config format, and results come back from the engine's JSON
reports.
"""

from __future__ import annotations

import json
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

MISSING_TOKEN = "NaN"


class EngineError(RuntimeError):
    """The engine rejected the request or failed while serving it."""


def write_dataset_csv(path: Path, X, y) -> None:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or y.shape[0] != X.shape[0]:
        raise ValueError(
            f"X must be 2-D with one response per row, got {X.shape} and "
            f"{y.shape}"
        )
    header = [f"x{j}" for j in range(X.shape[1])] + ["y"]
    lines = [",".join(header)]
    for i in range(X.shape[0]):
        cells = [repr(float(v)) for v in X[i]]
        cells.append(MISSING_TOKEN if np.isnan(y[i]) else repr(float(y[i])))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _run_engine(args: list[str]) -> None:
    cmd = [sys.executable, "-m", "selpipe", *args]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise EngineError(
            f"engine exited with code {proc.returncode}: "
            f"{proc.stderr.strip() or proc.stdout.strip()}"
        )


def _infer(extra: list[str], configs_payload: dict | None, pipeline: dict | None,
           X, y, sigma: float | None) -> dict:
    with tempfile.TemporaryDirectory(prefix="selpipe_builder_") as tmp:
        tmp = Path(tmp)
        data = tmp / "data.csv"
        write_dataset_csv(data, X, y)
        out = tmp / "report.json"
        args = ["infer", "--data", str(data), "--out", str(out)]
        if pipeline is not None:
            cfg = tmp / "pipeline.json"
            cfg.write_text(json.dumps(pipeline), encoding="utf-8")
            args += ["--pipeline", str(cfg)]
        else:
            cfg = tmp / "candidates.json"
            cfg.write_text(json.dumps(configs_payload), encoding="utf-8")
            args += ["--cv", str(cfg)]
        if "--select-only" not in extra:
            if sigma is None:
                args += ["--estimate-sigma"]
            else:
                args += ["--sigma", repr(float(sigma))]
        args += extra
        _run_engine(args)
        return json.loads(out.read_text(encoding="utf-8"))


def run_inference(pipeline: dict, X, y, sigma: float | None) -> dict:
    return _infer([], None, pipeline, X, y, sigma)


def run_cv_selection(configs: list[dict], X, y, num_folds: int,
                     seed: int) -> dict:
    payload = {"candidates": configs, "folds": num_folds, "seed": seed}
    return _infer(["--select-only"], payload, None, X, y, None)


def run_cv_inference(configs: list[dict], X, y, sigma: float | None,
                     num_folds: int, seed: int) -> dict:
    payload = {"candidates": configs, "folds": num_folds, "seed": seed}
    return _infer([], payload, None, X, y, sigma)
