"""Command-line interface.

``selpipe infer`` tests the features a pipeline selects on a CSV dataset;
``selpipe simulate`` runs the synthetic calibration experiments.  Exit codes:
0 success, 2 invalid data or usage, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .components import build_imputation_map, run_pipeline
from .crossval import CandidateSet, select_pipeline_cv, test_features_cv
from .data import GaussianModel, estimate_variance, load_dataset
from .exceptions import DataError, NumericalError
from .graph import load_pipeline, parse_pipeline
from .inference import test_features
from .simulate import run_simulation

EXIT_OK = 0
EXIT_DATA = 2
EXIT_NUMERIC = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="selpipe",
        description="Valid selective inference for feature-selection pipelines.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    infer = sub.add_parser("infer", help="test pipeline-selected features on a CSV")
    infer.add_argument("--data", required=True, help="CSV file with header row")
    group = infer.add_mutually_exclusive_group(required=True)
    group.add_argument("--pipeline", help="pipeline config JSON file")
    group.add_argument("--cv", help="candidate-set config JSON file")
    sig = infer.add_mutually_exclusive_group()
    sig.add_argument("--sigma", type=float, help="known noise std deviation")
    sig.add_argument("--estimate-sigma", action="store_true",
                     help="plug in the residual-based variance estimate")
    infer.add_argument("--target", help="response column (default: last)")
    infer.add_argument("--missing-token", default="NaN",
                       help="literal token marking missing responses")
    infer.add_argument("--select-only", action="store_true",
                       help="with --cv: report the selected pipeline, no tests")
    infer.add_argument("--out", help="write the JSON report here")

    sim = sub.add_parser("simulate", help="synthetic calibration experiments")
    sim.add_argument("--mode", choices=["null", "power"], required=True)
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--d", type=int, required=True)
    sim.add_argument("--trials", type=int, required=True)
    sim.add_argument("--delta", type=float, default=0.0,
                     help="signal size of the active features (power mode)")
    sim.add_argument("--alpha", type=float, default=0.05)
    group = sim.add_mutually_exclusive_group(required=True)
    group.add_argument("--pipeline", help="pipeline config JSON file")
    group.add_argument("--cv", help="candidate-set config JSON file")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--jobs", type=int, default=1)
    sim.add_argument("--estimate-sigma", action="store_true")
    sim.add_argument("--out", help="write the JSON report here")
    return parser


def _load_candidates(path: str) -> tuple[CandidateSet, dict]:
    config = json.loads(Path(path).read_text(encoding="utf-8"))
    for key in ("candidates",):
        if key not in config:
            raise DataError(f"{path}: candidate config needs a {key!r} list")
    cands = CandidateSet(
        tuple(parse_pipeline(c) for c in config["candidates"]),
        n_folds=int(config.get("folds", 2)),
        seed=int(config.get("seed", 0)),
    )
    return cands, config


def _emit(report: dict, out: str | None) -> None:
    text = json.dumps(report, indent=2)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _cmd_infer(args) -> int:
    dataset = load_dataset(args.data, missing_token=args.missing_token,
                           target=args.target)

    if args.cv:
        cands, _ = _load_candidates(args.cv)
        if args.select_only:
            s_star, _, errors = select_pipeline_cv(cands, dataset)
            _emit({
                "schema": "1",
                "selected_pipeline": s_star,
                "cv_errors": [None if e == float("inf") else e
                              for e in errors],
            }, args.out)
            return EXIT_OK
        graph = None
    else:
        graph = load_pipeline(args.pipeline)

    if args.sigma is None and not args.estimate_sigma:
        raise DataError("one of --sigma or --estimate-sigma is required")
    if args.sigma is not None:
        sigma = args.sigma
    else:
        ref = graph if graph is not None else cands.pipelines[0]
        mvi = ref.mvi_node
        if mvi is not None and dataset.n_obs != dataset.n:
            imp = build_imputation_map(mvi.method, dataset.X,
                                       dataset.miss_mask)
            y_full = imp.apply(dataset.y_obs)
        else:
            y_full = dataset.y_obs
        sigma = float(estimate_variance(dataset.X, y_full)) ** 0.5
    model = GaussianModel(sigma)

    report: dict = {"schema": "1"}
    if args.cv:
        results, s_star = test_features_cv(cands, dataset, model)
        report["selected_pipeline"] = s_star
        graph = cands.pipelines[s_star]
    else:
        results = test_features(graph, dataset, model)

    output = run_pipeline(graph, dataset)
    report["features"] = [
        {
            "id": r.feature,
            "name": dataset.names[r.feature],
            "beta_hat": r.beta_hat,
            "p_selective": r.p_selective,
            "p_naive": r.p_naive,
            "p_oc": r.p_oc,
            "n_segments": r.segments_visited,
        }
        for r in results
    ]
    report["outliers"] = list(output.outliers)
    report["sigma_used"] = sigma
    _emit(report, args.out)
    return EXIT_OK


def _cmd_simulate(args) -> int:
    pipeline = cv = None
    if args.pipeline:
        pipeline = json.loads(Path(args.pipeline).read_text(encoding="utf-8"))
    else:
        cv = json.loads(Path(args.cv).read_text(encoding="utf-8"))
    report, timing = run_simulation(
        mode=args.mode, n=args.n, d=args.d, trials=args.trials,
        alpha=args.alpha, delta=args.delta, pipeline=pipeline, cv=cv,
        seed=args.seed, jobs=args.jobs, estimate_sigma=args.estimate_sigma,
    )
    _emit(report, args.out)
    rates = report["rejection_rates"]
    print(
        f"tested={report['tested']} selective={rates['selective']:.4f} "
        f"naive={rates['naive']:.4f} oc={rates['oc']:.4f} "
        f"ks={report['ks_selective']:.4f} "
        f"wall={timing['total_seconds']:.1f}s "
        f"p50={timing['per_trial_p50']:.3f}s p90={timing['per_trial_p90']:.3f}s",
        file=sys.stderr,
    )
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "infer":
            return _cmd_infer(args)
        return _cmd_simulate(args)
    except (DataError, OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
