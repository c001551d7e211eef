"""Pipeline selection by K-fold cross-validation with valid downstream
inference.

Choosing among candidate pipelines by CV error is itself a selection event:
along the response line, the winning candidate is piecewise constant, with
boundaries where two candidates' (piecewise quadratic) CV error curves cross.
The conditioning interval at ``z`` intersects three pieces: constancy of every
per-fold pipeline run, the quadratic comparisons pinning the argmin, and
constancy of the winner's full-data run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .components import (
    FitContext,
    ImputationMap,
    build_imputation_map,
    run_pipeline,
)
from .data import GaussianModel, MaskedDataset
from .exceptions import EmptySelectionError, PipelineConfigError
from .graph import PipelineGraph
from .inference import (
    SelectiveTestResult,
    build_test_direction,
    decompose,
    naive_two_sided_p,
    search_window,
    tn_two_sided_p,
)
from .intervals import (
    Interval,
    IntervalSet,
    solve_quadratic_inequality,
)
from .search import (
    DEGENERATE_ERRORS,
    SearchContext,
    sweep_line,
    update_interval,
)


def make_folds(n: int, n_folds: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Contiguous validation blocks over a seeded shuffle of the row indices.

    Returns ``(train, validation)`` index pairs; both sorted ascending.
    """
    if not 2 <= n_folds <= n:
        raise ValueError(f"need 2 <= folds <= n, got folds={n_folds}, n={n}")
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    perm = rng.permutation(n)
    folds = []
    for block in np.array_split(perm, n_folds):
        val = np.sort(block)
        train = np.setdiff1d(np.arange(n), val)
        folds.append((train, val))
    return folds


@dataclass(frozen=True)
class CandidateSet:
    """Candidate pipelines plus the fold plan used to score them."""

    pipelines: tuple[PipelineGraph, ...]
    n_folds: int = 2
    seed: int = 0

    def __post_init__(self):
        if len(self.pipelines) < 1:
            raise PipelineConfigError("candidate set must not be empty")

    def folds(self, n: int) -> list[tuple[np.ndarray, np.ndarray]]:
        return make_folds(n, self.n_folds, self.seed)


def _global_imputation(graph: PipelineGraph,
                       dataset: MaskedDataset) -> ImputationMap | None:
    mvi = graph.mvi_node
    if mvi is None:
        if dataset.n_obs != dataset.n:
            raise PipelineConfigError(
                "dataset has missing responses but a candidate has no "
                "imputation node"
            )
        return None
    return build_imputation_map(mvi.method, dataset.X, dataset.miss_mask)


def _fold_dataset(X: np.ndarray, train: np.ndarray) -> MaskedDataset:
    n_t = train.size
    return MaskedDataset(X=X[train], y_obs=np.zeros(n_t),
                         miss_mask=np.zeros(n_t, dtype=bool))


def _fold_refit(X, y_imp, train, val, local_out, features):
    """Validation residual of the least squares refit on the fold's kept
    rows; selections with no features predict zero."""
    kept = np.setdiff1d(train, train[list(local_out)]) if local_out else train
    if not features:
        return y_imp[val]
    cols = np.asarray(features, dtype=int)
    fit = FitContext(X[np.ix_(kept, cols)])
    beta = fit.coefficients(y_imp[kept])
    return y_imp[val] - X[np.ix_(val, cols)] @ beta


def cv_error(pipeline: PipelineGraph, dataset: MaskedDataset,
             folds, imputation: ImputationMap | None = None) -> float:
    """Sum over folds of the mean squared validation residual, after running
    the pipeline on the (globally imputed) training block."""
    if imputation is None:
        imputation = _global_imputation(pipeline, dataset)
    y_imp = (imputation.apply(dataset.y_obs) if imputation is not None
             else dataset.y_obs)
    X = dataset.X
    total = 0.0
    for train, val in folds:
        fold_ds = _fold_dataset(X, train).with_y_obs(y_imp[train])
        out = run_pipeline(pipeline, fold_ds)
        resid = _fold_refit(X, y_imp, train, val, out.outliers, out.features)
        total += float(resid @ resid) / val.size
    return total


def select_pipeline_cv(
    candidates: CandidateSet, dataset: MaskedDataset
) -> tuple[int, PipelineGraph, list[float]]:
    """Lowest-CV-error candidate (ties to the lowest index); candidates whose
    fold runs fail are excluded."""
    folds = candidates.folds(dataset.n)
    errors: list[float] = []
    for pipeline in candidates.pipelines:
        try:
            errors.append(cv_error(pipeline, dataset, folds))
        except DEGENERATE_ERRORS:
            errors.append(math.inf)
    best = int(np.argmin(errors))
    if errors[best] == math.inf:
        raise EmptySelectionError("every candidate pipeline is infeasible")
    return best, candidates.pipelines[best], errors


@dataclass(frozen=True)
class CvUpdateResult:
    """Constancy interval of the full select-then-run procedure at ``z``."""

    interval: Interval
    features: tuple[int, ...]
    outliers: tuple[int, ...]
    selected: int
    completed: bool


@dataclass
class CvSearchContext:
    """Caches for one cross-validated line search: per-candidate imputations
    and lines, per-fold datasets/lines/contexts, and full-data contexts.

    Walk results are reused while ``z`` stays inside their constancy interval
    (sound by the interval's defining property), which makes the sweep cost
    proportional to the number of distinct breakpoints rather than
    ``segments x candidates x folds``.
    """

    candidates: CandidateSet
    dataset: MaskedDataset
    a: np.ndarray
    b: np.ndarray
    folds: list = field(init=False)
    imputations: list = field(init=False)
    lines: list = field(init=False)
    fold_contexts: dict = field(default_factory=dict, init=False)
    full_contexts: dict = field(default_factory=dict, init=False)
    _fold_datasets: dict = field(default_factory=dict, init=False)
    _fold_last: dict = field(default_factory=dict, init=False)
    _full_last: dict = field(default_factory=dict, init=False)
    _quad_cache: dict = field(default_factory=dict, init=False)

    def __post_init__(self):
        self.folds = self.candidates.folds(self.dataset.n)
        self.imputations = []
        self.lines = []
        by_method: dict = {}
        for pipeline in self.candidates.pipelines:
            imp = _global_imputation(pipeline, self.dataset)
            key = imp.method if imp is not None else None
            if key not in by_method:
                if imp is None:
                    by_method[key] = (None, (self.a, self.b))
                else:
                    by_method[key] = (imp, (imp.apply(self.a),
                                            imp.apply(self.b)))
            imp, line = by_method[key]
            self.imputations.append(imp)
            self.lines.append(line)

    def fold_dataset(self, k: int) -> MaskedDataset:
        if k not in self._fold_datasets:
            train, _ = self.folds[k]
            self._fold_datasets[k] = _fold_dataset(self.dataset.X, train)
        return self._fold_datasets[k]

    def fold_walk(self, s: int, k: int, z: float):
        """Per-fold update_interval for candidate ``s`` on fold ``k``."""
        key = (s, k)
        last = self._fold_last.get(key)
        if last is not None and last.interval.lo <= z <= last.interval.hi:
            return last
        train, _ = self.folds[k]
        ya, yb = self.lines[s]
        fa, fb = ya[train], yb[train]
        ds = self.fold_dataset(k)
        ctx = self.fold_contexts.get(key)
        if ctx is None:
            ctx = SearchContext(self.candidates.pipelines[s], ds, fa, fb)
            self.fold_contexts[key] = ctx
        res = update_interval(self.candidates.pipelines[s], ds, fa, fb, z,
                              ctx)
        self._fold_last[key] = res
        return res

    def full_walk(self, s: int, z: float):
        last = self._full_last.get(s)
        if last is not None and last.interval.lo <= z <= last.interval.hi:
            return last
        ctx = self.full_contexts.get(s)
        if ctx is None:
            ctx = SearchContext(self.candidates.pipelines[s], self.dataset,
                                self.a, self.b)
            self.full_contexts[s] = ctx
        res = update_interval(self.candidates.pipelines[s], self.dataset,
                              self.a, self.b, z, ctx)
        self._full_last[s] = res
        return res

    def fold_quadratic(self, s: int, k: int, outliers, features):
        """Coefficients of the fold's validation error as a quadratic in
        ``r``, or None when the refit is degenerate."""
        key = (s, k, outliers, features)
        if key not in self._quad_cache:
            train, val = self.folds[k]
            ya, yb = self.lines[s]
            try:
                va = _fold_refit(self.dataset.X, ya, train, val, outliers,
                                 features)
                vb = _fold_refit(self.dataset.X, yb, train, val, outliers,
                                 features)
            except DEGENERATE_ERRORS:
                self._quad_cache[key] = None
            else:
                w = 1.0 / val.size
                self._quad_cache[key] = w * np.array([
                    float(vb @ vb), 2.0 * float(va @ vb), float(va @ va)
                ])
        return self._quad_cache[key]


def cv_truncation(context: CvSearchContext, z: float) -> CvUpdateResult:
    """One step of the cross-validated walk at ``z``.

    Computes per-(candidate, fold) constancy intervals, assembles each
    candidate's CV error as an explicit quadratic in ``r`` on their
    intersection, pins the argmin with pairwise quadratic comparisons, and
    intersects with the winner's full-data constancy interval.
    """
    candidates = context.candidates
    S = len(candidates.pipelines)
    if S == 1:
        res = context.full_walk(0, z)
        return CvUpdateResult(res.interval, res.features, res.outliers, 0,
                              res.completed)

    lo, hi = -math.inf, math.inf
    quads: list[tuple[float, float, float] | None] = []
    for s in range(S):
        coeff = np.zeros(3)  # E_s(r) = coeff[0] r^2 + coeff[1] r + coeff[2]
        feasible = True
        for k in range(len(context.folds)):
            res = context.fold_walk(s, k, z)
            lo = max(lo, res.interval.lo)
            hi = min(hi, res.interval.hi)
            if not res.completed or not feasible:
                feasible = False
                continue
            # Fold-walk outliers are already local to the fold's row frame.
            part = context.fold_quadratic(s, k, res.outliers, res.features)
            if part is None:
                feasible = False
                continue
            coeff += part
        quads.append(tuple(coeff) if feasible else None)

    feasible_ids = [s for s in range(S) if quads[s] is not None]
    if not feasible_ids:
        return CvUpdateResult(Interval(min(lo, z), max(hi, z)), (), (), -1,
                              False)
    values = {s: (quads[s][0] * z + quads[s][1]) * z + quads[s][2]
              for s in feasible_ids}
    winner = min(feasible_ids, key=lambda s: (values[s], s))

    aw, bw, cw = quads[winner]
    for s in feasible_ids:
        if s == winner:
            continue
        a2, b2, c2 = quads[s]
        iv = solve_quadratic_inequality(aw - a2, bw - b2, cw - c2, z)
        lo = max(lo, iv.lo)
        hi = min(hi, iv.hi)

    full = context.full_walk(winner, z)
    lo = max(lo, full.interval.lo)
    hi = min(hi, full.interval.hi)
    return CvUpdateResult(
        interval=Interval(min(lo, z), max(hi, z)),
        features=full.features,
        outliers=full.outliers,
        selected=winner,
        completed=full.completed,
    )


def cv_line_search(
    context: CvSearchContext,
    target: tuple[int, tuple[int, ...], tuple[int, ...]],
    window: Interval,
) -> tuple[IntervalSet, int]:
    """Truncation set for the select-then-run procedure: segments where the
    CV winner and its pipeline outcome both match the observed ones."""
    s_star, feats, outs = target

    def matches(res: CvUpdateResult) -> bool:
        return (res.completed and res.selected == s_star
                and res.features == feats and res.outliers == outs)

    return sweep_line(lambda z: cv_truncation(context, z), matches, window)


def test_features_cv(
    candidates: CandidateSet,
    dataset: MaskedDataset,
    model: GaussianModel,
    features: tuple[int, ...] | None = None,
) -> tuple[list[SelectiveTestResult], int]:
    """CV-select a pipeline, then test its selected features conditioning on
    both the CV choice and the pipeline's selections.

    Returns the per-feature results and the winning candidate index.
    """
    from .inference import test_features

    s_star, graph, _ = select_pipeline_cv(candidates, dataset)
    if len(candidates.pipelines) == 1:
        return test_features(graph, dataset, model, features), s_star
    imputation = _global_imputation(graph, dataset)
    output = run_pipeline(graph, dataset, imputation=imputation)
    tested = output.features if features is None else tuple(features)
    results = []
    for j in tested:
        direction = build_test_direction(
            dataset, imputation, output.outliers, output.features, j, model
        )
        line = decompose(dataset.y_obs, direction.eta)
        window = search_window(direction.z_obs, direction.sigma_T)
        context = CvSearchContext(candidates, dataset, line.a, line.b)
        target = (s_star, output.features, output.outliers)
        truncation, visited = cv_line_search(context, target, window)
        at_obs = cv_truncation(context, direction.z_obs)
        oc_part = at_obs.interval.clip_to(window.lo, window.hi)
        oc_set = (IntervalSet([oc_part]) if oc_part is not None
                  else truncation)
        results.append(SelectiveTestResult(
            feature=j,
            beta_hat=direction.z_obs,
            p_selective=tn_two_sided_p(direction.z_obs, direction.sigma_T,
                                       truncation),
            p_naive=naive_two_sided_p(direction.z_obs, direction.sigma_T),
            p_oc=tn_two_sided_p(direction.z_obs, direction.sigma_T, oc_set),
            truncation=truncation,
            segments_visited=visited,
        ))
    return results, s_star
