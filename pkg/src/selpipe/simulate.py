"""Synthetic calibration experiments: type-I error, uniformity, and power.

Each trial draws a fresh dataset from a counter-based RNG substream keyed by
``(seed, trial)``, runs the full selective inference, and tests one randomly
chosen selected feature (in power mode, one truly active selected feature).
Results are therefore independent of how trials are distributed over
workers.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np
from joblib import Parallel, delayed
from scipy.stats import kstest

from .components import build_imputation_map, run_pipeline
from .crossval import CandidateSet, select_pipeline_cv, test_features_cv
from .data import GaussianModel, MaskedDataset, estimate_variance
from .exceptions import SelpipeError
from .graph import PipelineGraph, parse_pipeline
from .inference import test_features

MISSING_PROB = 0.03
_ACTIVE = 3  # leading coordinates carrying signal in power mode


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    feature: int
    p_selective: float
    p_naive: float
    p_oc: float
    n_segments: int


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    key = np.array([seed, trial], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _draw_dataset(rng, n: int, d: int, delta: float) -> MaskedDataset:
    X = rng.standard_normal((n, d))
    y = rng.standard_normal(n)
    if delta != 0.0:
        beta = np.zeros(d)
        beta[:_ACTIVE] = delta
        y = y + X @ beta
    miss = rng.random(n) < MISSING_PROB
    if miss.all():
        miss[:] = False
    return MaskedDataset(X=X, y_obs=y[~miss], miss_mask=miss)


def _resolve_model(dataset, graph, estimate_sigma: bool) -> GaussianModel:
    if not estimate_sigma:
        return GaussianModel(1.0)
    mvi = graph.mvi_node
    if mvi is None or dataset.n_obs == dataset.n:
        y_full = dataset.y_obs
    else:
        imp = build_imputation_map(mvi.method, dataset.X, dataset.miss_mask)
        y_full = imp.apply(dataset.y_obs)
    return GaussianModel(float(np.sqrt(estimate_variance(dataset.X, y_full))))


def run_trial(
    seed: int,
    trial: int,
    n: int,
    d: int,
    delta: float,
    pipeline_config=None,
    cv_config=None,
    estimate_sigma: bool = False,
) -> tuple[TrialRecord | None | str, float]:
    """One simulation trial; the outcome is None when no eligible feature was
    selected and an error string when the engine failed.  Returns the outcome
    with the trial's wall time."""
    t0 = time.perf_counter()
    outcome = _trial_outcome(seed, trial, n, d, delta, pipeline_config,
                             cv_config, estimate_sigma)
    return outcome, time.perf_counter() - t0


def _trial_outcome(seed, trial, n, d, delta, pipeline_config, cv_config,
                   estimate_sigma):
    rng = trial_rng(seed, trial)
    dataset = _draw_dataset(rng, n, d, delta)
    try:
        if cv_config is not None:
            cands = CandidateSet(
                tuple(parse_pipeline(c) for c in cv_config["candidates"]),
                n_folds=int(cv_config.get("folds", 2)),
                seed=int(cv_config.get("seed", 0)),
            )
            _, graph, _ = select_pipeline_cv(cands, dataset)
        else:
            graph = parse_pipeline(pipeline_config)
        output = run_pipeline(graph, dataset)
        pool = np.asarray(output.features, dtype=int)
        if pool.size == 0:
            return None
        # One uniformly chosen selected feature per trial, in every mode:
        # under the null each such p-value is an independent U(0,1) draw.
        feature = int(rng.choice(pool))
        model = _resolve_model(dataset, graph, estimate_sigma)
        if cv_config is not None:
            results, _ = test_features_cv(cands, dataset, model,
                                          features=(feature,))
        else:
            results = test_features(graph, dataset, model,
                                    features=(feature,))
        r = results[0]
        return TrialRecord(trial, feature, r.p_selective, r.p_naive, r.p_oc,
                           r.segments_visited)
    except SelpipeError as exc:
        return f"trial {trial}: {type(exc).__name__}: {exc}"


def run_simulation(
    mode: str,
    n: int,
    d: int,
    trials: int,
    alpha: float = 0.05,
    delta: float = 0.0,
    pipeline: PipelineGraph | dict | None = None,
    cv: dict | None = None,
    seed: int = 0,
    jobs: int = 1,
    estimate_sigma: bool = False,
) -> tuple[dict, dict]:
    """Run ``trials`` independent trials and aggregate.

    Returns ``(report, timing)``; the report is fully determined by the
    arguments (safe to compare byte-for-byte), timing is wall-clock.
    """
    if mode not in ("null", "power"):
        raise ValueError(f"mode must be 'null' or 'power', got {mode!r}")
    if (pipeline is None) == (cv is None):
        raise ValueError("exactly one of pipeline/cv must be given")
    delta = float(delta) if mode == "power" else 0.0
    pipeline_config = (pipeline.to_config() if isinstance(pipeline, PipelineGraph)
                       else pipeline)

    started = time.perf_counter()
    args = dict(n=n, d=d, delta=delta, pipeline_config=pipeline_config,
                cv_config=cv, estimate_sigma=estimate_sigma)
    if jobs == 1:
        raw = [run_trial(seed, t, **args) for t in range(trials)]
    else:
        raw = Parallel(n_jobs=jobs)(
            delayed(run_trial)(seed, t, **args) for t in range(trials)
        )
    elapsed = time.perf_counter() - started

    outcomes = [r for r, _ in raw]
    seconds = np.array([s for _, s in raw])
    records = [r for r in outcomes if isinstance(r, TrialRecord)]
    errors = [r for r in outcomes if isinstance(r, str)]
    skipped = sum(1 for r in outcomes if r is None)

    def rate(values: list[float]) -> float:
        return float(np.mean([p <= alpha for p in values])) if values else float("nan")

    p_sel = [r.p_selective for r in records]
    p_naive = [r.p_naive for r in records]
    p_oc = [r.p_oc for r in records]
    ks = float(kstest(p_sel, "uniform").statistic) if p_sel else float("nan")

    report = {
        "schema": "1",
        "mode": mode,
        "n": n,
        "d": d,
        "trials": trials,
        "alpha": alpha,
        "delta": delta,
        "seed": seed,
        "sigma": "estimated" if estimate_sigma else "known",
        "tested": len(records),
        "skipped": skipped,
        "errors": errors,
        "rejection_rates": {
            "selective": rate(p_sel),
            "naive": rate(p_naive),
            "oc": rate(p_oc),
        },
        "ks_selective": ks,
        "mean_segments": (float(np.mean([r.n_segments for r in records]))
                          if records else float("nan")),
        "records": [asdict(r) for r in records],
    }
    timing = {
        "total_seconds": elapsed,
        "jobs": jobs,
        "per_trial_p50": float(np.quantile(seconds, 0.5)),
        "per_trial_p90": float(np.quantile(seconds, 0.9)),
        "per_trial_max": float(seconds.max()),
    }
    return report, timing
