"""Forward (observed-data) execution of every pipeline component.

All detectors/selectors work on the sub-matrix they are given and return
indices in that local frame; :func:`run_pipeline` owns the translation to
global row/column ids.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .data import MaskedDataset
from .exceptions import (
    BranchConsistencyError,
    DegreesOfFreedomError,
    EmptySelectionError,
    LeverageError,
    NormalizationError,
    PipelineConfigError,
    RankError,
)
from .graph import (
    COMBINE_FEATURES,
    COMBINE_OUTLIERS,
    FS,
    MVI,
    OD,
    SOURCE,
    PipelineGraph,
)
from .solvers import lasso_cd, lasso_support

_LEVERAGE_TOL = 1e-10
# Residual norms at or below this share of the response norm are projection
# round-off, not signal: influence ratios of such noise are meaningless.
RESID_NOISE_TOL = 1e-12


def effective_rss(resid: np.ndarray, y: np.ndarray) -> float:
    """Squared residual norm, snapped to zero when it is numerically
    indistinguishable from an exact fit."""
    rss = float(resid @ resid)
    floor = RESID_NOISE_TOL**2 * max(float(y @ y), np.finfo(float).tiny)
    return 0.0 if rss <= floor else rss


class FitContext:
    """QR-based least squares machinery for one fixed design matrix.

    Shared by the influence diagnostics, the mean-shift detector, and the
    selection-event characterizations, which all need the same projections.
    """

    __slots__ = ("X", "n", "d", "Q", "R", "_annihilator", "_leverages")

    def __init__(self, X: np.ndarray):
        self.X = X
        self.n, self.d = X.shape
        if self.n < self.d:
            raise DegreesOfFreedomError(
                f"need at least as many rows as columns, got {self.n} x {self.d}"
            )
        Q, R = np.linalg.qr(X, mode="reduced")
        diag = np.abs(np.diag(R))
        tol = max(self.n, self.d) * np.finfo(float).eps * (diag.max() if self.d else 0.0)
        if self.d and diag.min() <= tol:
            raise RankError(
                f"design matrix {self.n}x{self.d} is rank deficient "
                f"(|R_jj| min {diag.min():.2e})"
            )
        self.Q, self.R = Q, R
        self._annihilator = None
        self._leverages = None

    @property
    def leverages(self) -> np.ndarray:
        if self._leverages is None:
            self._leverages = np.einsum("ij,ij->i", self.Q, self.Q)
        return self._leverages

    @property
    def annihilator(self) -> np.ndarray:
        """The residual projector ``I - X (X^T X)^{-1} X^T``."""
        if self._annihilator is None:
            P = -self.Q @ self.Q.T
            P[np.diag_indices(self.n)] += 1.0
            self._annihilator = P
        return self._annihilator

    def residualize(self, v: np.ndarray) -> np.ndarray:
        return v - self.Q @ (self.Q.T @ v)

    def coefficients(self, v: np.ndarray) -> np.ndarray:
        """Least squares coefficients of ``v`` on the columns of ``X``."""
        return solve_triangular(self.R, self.Q.T @ v)

    def coef_map(self) -> np.ndarray:
        """The ``d x n`` matrix mapping a response to its OLS coefficients."""
        return solve_triangular(self.R, self.Q.T)


@dataclass(frozen=True)
class ImputationMap:
    """Linear imputation operator: full-length response = ``D @ y_obs``.

    Rows at observed positions embed the observation unchanged; only rows at
    missing positions mix observed entries.  ``D`` depends on the design and
    the mask, never on the response.
    """

    D: np.ndarray
    method: str

    def apply(self, y_obs: np.ndarray) -> np.ndarray:
        return self.D @ y_obs


def build_imputation_map(method: str, X: np.ndarray,
                         miss_mask: np.ndarray) -> ImputationMap:
    X = np.asarray(X, dtype=float)
    mask = np.asarray(miss_mask, dtype=bool)
    n = X.shape[0]
    obs = np.nonzero(~mask)[0]
    mis = np.nonzero(mask)[0]
    n_obs = obs.size
    if n_obs < 1:
        raise EmptySelectionError("cannot impute with zero observed responses")
    D = np.zeros((n, n_obs))
    D[obs, np.arange(n_obs)] = 1.0
    if mis.size == 0:
        return ImputationMap(D=D, method=method)

    if method == "mean":
        D[mis, :] = 1.0 / n_obs
    elif method == "knn":
        # Single nearest observed row by Euclidean distance, lowest index wins.
        for i in mis:
            dist = np.linalg.norm(X[obs] - X[i], axis=1)
            D[i, int(np.argmin(dist))] = 1.0
    elif method == "regression":
        X_obs = X[obs]
        if n_obs <= X.shape[1]:
            raise DegreesOfFreedomError(
                f"regression imputation needs more observed rows than "
                f"columns, got {n_obs} x {X.shape[1]}"
            )
        ctx = FitContext(X_obs)
        # Row i of D is x_i^T (X_obs^T X_obs)^{-1} X_obs^T.
        D[mis, :] = X[mis] @ ctx.coef_map()
    else:
        raise ValueError(f"unknown imputation method {method!r}")
    return ImputationMap(D=D, method=method)


def _influence_context(X: np.ndarray, y: np.ndarray,
                       ctx: FitContext | None) -> tuple[FitContext, np.ndarray]:
    if ctx is None:
        ctx = FitContext(X)
    if ctx.n <= ctx.d:
        raise DegreesOfFreedomError(
            f"influence diagnostics need n > d, got {ctx.n} x {ctx.d}"
        )
    if np.any(ctx.leverages >= 1.0 - _LEVERAGE_TOL):
        raise LeverageError(
            "a leverage value equals one; influence measures are undefined"
        )
    return ctx, ctx.residualize(y)


def detect_outliers_cook(X: np.ndarray, y: np.ndarray, lam: float,
                         ctx: FitContext | None = None) -> tuple[int, ...]:
    """Rows whose Cook's distance exceeds ``lam``."""
    ctx, resid = _influence_context(X, y, ctx)
    n, d = ctx.n, ctx.d
    rss = effective_rss(resid, y)
    if rss == 0.0:
        return ()
    mse = rss / (n - d)
    h = ctx.leverages
    dist = resid**2 / (d * mse) * h / (1.0 - h) ** 2
    return tuple(int(i) for i in np.nonzero(dist > lam)[0])


def detect_outliers_dffits(X: np.ndarray, y: np.ndarray, lam: float,
                           ctx: FitContext | None = None) -> tuple[int, ...]:
    """Rows whose squared DFFITS exceeds ``lam * d / (n - d)``."""
    ctx, resid = _influence_context(X, y, ctx)
    n, d = ctx.n, ctx.d
    if n - d - 1 < 1:
        raise DegreesOfFreedomError(
            f"external studentization needs n - d - 1 >= 1, got n={n}, d={d}"
        )
    rss = effective_rss(resid, y)
    if rss == 0.0:
        return ()
    h = ctx.leverages
    # Leave-one-out error estimate; clamp tiny negatives from rounding.
    mse_loo = np.maximum(rss - resid**2 / (1.0 - h), 0.0) / (n - d - 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        r_ext_sq = resid**2 / (mse_loo * (1.0 - h))
        dffits_sq = h / (1.0 - h) * r_ext_sq
    dffits_sq = np.where(resid == 0.0, 0.0, dffits_sq)
    return tuple(int(i) for i in np.nonzero(dffits_sq > lam * d / (n - d))[0])


def detect_outliers_soft_ipod(
    X: np.ndarray, y: np.ndarray, lam: float,
    ctx: FitContext | None = None,
    warm_start: np.ndarray | None = None,
    return_coef: bool = False,
):
    """Support of the L1-penalized mean-shift term.

    Solved through the reduction to a lasso whose design is the residual
    projector of ``X`` and whose response is the projected response.
    """
    if ctx is None:
        ctx = FitContext(X)
    P = ctx.annihilator
    u = lasso_cd(P, ctx.residualize(y), lam, warm_start=warm_start)
    support = lasso_support(u)
    return (support, u) if return_coef else support


def select_marginal(X: np.ndarray, y: np.ndarray, k: int) -> tuple[int, ...]:
    """Indices of the ``k`` columns with the largest |inner product| against
    ``y`` after scaling each column to unit norm."""
    d = X.shape[1]
    if not 1 <= k <= d:
        raise EmptySelectionError(
            f"marginal screening needs 1 <= k <= {d} columns, got k={k}"
        )
    norms = np.linalg.norm(X, axis=0)
    if np.any(norms == 0.0):
        raise NormalizationError(
            f"columns {np.nonzero(norms == 0.0)[0].tolist()} have zero norm"
        )
    scores = np.abs(X.T @ y) / norms
    order = np.argsort(-scores, kind="stable")  # ties -> lowest index first
    return tuple(sorted(int(j) for j in order[:k]))


# Candidates whose residualized norm falls below this share of their original
# norm are collinear with the current model and skipped.
_COLLINEAR_TOL = 1e-12
# Greedy steps stop when the best RSS improvement is this small relative to
# the response norm (the exact-arithmetic "no improvement" case).
_STEPWISE_STOP_TOL = 1e-24


def select_stepwise(X: np.ndarray, y: np.ndarray, k: int,
                    return_path: bool = False):
    """Forward greedy selection of up to ``k`` columns by refit RSS.

    Each step adds the column whose inclusion minimizes the residual sum of
    squares (ties to the lowest index); stops early when no column improves
    the fit.  Collinear candidates are skipped, and no intercept is added.
    """
    n, d = X.shape
    if not 1 <= k <= min(n, d):
        raise EmptySelectionError(
            f"stepwise selection needs 1 <= k <= min(n, d) = {min(n, d)}, "
            f"got k={k}"
        )
    base_sq = np.einsum("ij,ij->j", X, X)
    stop_tol = _STEPWISE_STOP_TOL * float(y @ y)
    Xr = X.copy()  # columns residualized against the selected model
    chosen: list[int] = []
    for _ in range(k):
        norms_sq = np.einsum("ij,ij->j", Xr, Xr)
        eligible = norms_sq > _COLLINEAR_TOL * np.maximum(base_sq, 1.0)
        for j in chosen:
            eligible[j] = False
        if not eligible.any():
            break
        with np.errstate(invalid="ignore", divide="ignore"):
            gains = np.where(eligible, (Xr.T @ y) ** 2 / norms_sq, -np.inf)
        best = int(np.argmax(gains))
        if gains[best] <= stop_tol:
            break
        chosen.append(best)
        q = Xr[:, best] / np.sqrt(norms_sq[best])
        Xr = Xr - np.outer(q, q @ Xr)
    if not chosen:
        raise EmptySelectionError("stepwise selection found no usable column")
    selected = tuple(sorted(chosen))
    return (selected, tuple(chosen)) if return_path else selected


def select_lasso(X: np.ndarray, y: np.ndarray, lam: float,
                 warm_start: np.ndarray | None = None,
                 return_coef: bool = False):
    """Support of the L1-penalized least squares coefficients."""
    beta = lasso_cd(X, y, lam, warm_start=warm_start)
    support = lasso_support(beta)
    return (support, beta) if return_coef else support


def combine_sets(op: str, sets: list[tuple[int, ...]]) -> tuple[int, ...]:
    if len(sets) < 2:
        raise ValueError(f"combine needs at least 2 sets, got {len(sets)}")
    acc = set(sets[0])
    for s in sets[1:]:
        acc = acc | set(s) if op == "union" else acc & set(s)
    if op not in ("union", "intersection"):
        raise ValueError(f"unknown combine op {op!r}")
    return tuple(sorted(acc))


@dataclass(frozen=True)
class PipelineOutput:
    """Concrete pipeline result: imputed response, outlier rows, selected
    features (all in global coordinates, sorted)."""

    y_plus: np.ndarray
    outliers: tuple[int, ...]
    features: tuple[int, ...]


@dataclass(frozen=True)
class _ForwardState:
    y: np.ndarray
    imputed: bool
    outliers: tuple[int, ...]
    features: tuple[int, ...]


def subframe(n: int, outliers: tuple[int, ...],
             features: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
    rows = np.setdiff1d(np.arange(n), np.asarray(outliers, dtype=int))
    cols = np.asarray(features, dtype=int)
    return rows, cols


def _run_component(node, X_sub: np.ndarray, y_sub: np.ndarray):
    if node.kind == OD:
        if node.method == "cook":
            return detect_outliers_cook(X_sub, y_sub, node.param)
        if node.method == "dffits":
            return detect_outliers_dffits(X_sub, y_sub, node.param)
        return detect_outliers_soft_ipod(X_sub, y_sub, node.param)
    if node.method == "marginal":
        return select_marginal(X_sub, y_sub, node.param)
    if node.method == "stepwise":
        return select_stepwise(X_sub, y_sub, node.param)
    return select_lasso(X_sub, y_sub, node.param)


def run_pipeline(graph: PipelineGraph, dataset: MaskedDataset,
                 imputation: ImputationMap | None = None) -> PipelineOutput:
    """Execute a pipeline on concrete data.

    Detectors/selectors always see the dataset restricted to the current
    non-outlier rows and selected columns; their local results are mapped
    back to global indices before updating the state.
    """
    X = dataset.X
    n, d = dataset.n, dataset.d
    mvi = graph.mvi_node
    if mvi is None and dataset.n_obs != n:
        raise PipelineConfigError(
            "dataset has missing responses but the pipeline has no "
            "imputation node"
        )
    if imputation is None and mvi is not None:
        imputation = build_imputation_map(mvi.method, X, dataset.miss_mask)

    states: dict[int, _ForwardState] = {}
    for nid in graph.topological_order():
        node = graph.nodes[nid]
        if node.kind == SOURCE:
            states[nid] = _ForwardState(dataset.y_obs, False, (),
                                        tuple(range(d)))
            continue
        inputs = [states[p] for p in graph.parents[nid]]
        if node.kind == MVI:
            (prev,) = inputs
            states[nid] = _ForwardState(imputation.apply(prev.y), True,
                                        prev.outliers, prev.features)
        elif node.kind in (OD, FS):
            (prev,) = inputs
            if not prev.features:
                raise EmptySelectionError(
                    f"no features left for node {node.label()}"
                )
            rows, cols = subframe(n, prev.outliers, prev.features)
            if rows.size == 0:
                raise EmptySelectionError(
                    f"no rows left for node {node.label()}"
                )
            local = _run_component(node, X[np.ix_(rows, cols)], prev.y[rows])
            if node.kind == OD:
                new_out = combine_sets("union", [
                    prev.outliers, tuple(int(rows[i]) for i in local)
                ]) if local else prev.outliers
                states[nid] = _ForwardState(prev.y, prev.imputed, new_out,
                                            prev.features)
            else:
                feats = tuple(int(cols[j]) for j in local)
                states[nid] = _ForwardState(prev.y, prev.imputed,
                                            prev.outliers, feats)
        elif node.kind in (COMBINE_FEATURES, COMBINE_OUTLIERS):
            first = inputs[0]
            if node.kind == COMBINE_FEATURES:
                if any(s.outliers != first.outliers for s in inputs):
                    raise BranchConsistencyError(
                        f"branches into {node.label()} disagree on outliers"
                    )
                merged = combine_sets(node.method,
                                      [s.features for s in inputs])
                states[nid] = _ForwardState(first.y, first.imputed,
                                            first.outliers, merged)
            else:
                if any(s.features != first.features for s in inputs):
                    raise BranchConsistencyError(
                        f"branches into {node.label()} disagree on features"
                    )
                merged = combine_sets(node.method,
                                      [s.outliers for s in inputs])
                states[nid] = _ForwardState(first.y, first.imputed, merged,
                                            first.features)
        else:  # sink / extract_features / remove_outliers: pass through
            (prev,) = inputs
            states[nid] = prev

    final = states[graph.sink_id]
    return PipelineOutput(y_plus=final.y, outliers=final.outliers,
                          features=final.features)
