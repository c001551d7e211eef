"""Test directions, the truncated-normal law, and the per-feature selective
test driver.

Gaussian interval masses are computed as differences of survival functions on
the side away from the mean, in log domain, so that p-values stay nonzero and
monotone even when the statistic sits dozens of standard deviations out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr, logsumexp

from .components import (
    FitContext,
    ImputationMap,
    PipelineOutput,
    build_imputation_map,
    run_pipeline,
)
from .data import GaussianModel, MaskedDataset
from .events import ParamLine
from .exceptions import (
    DegenerateTruncationError,
    DegreesOfFreedomError,
    RankError,
    SearchStallError,
)
from .graph import PipelineGraph
from .intervals import INF, Interval, IntervalSet
from .search import SearchContext, line_search_truncation, update_interval

# Half-width of the search window in null standard deviations.  Mass beyond
# is below 1e-20, perturbing p-values by less than 1e-12.
WINDOW_SIGMAS = 10.0
_BOUNDARY_TOL = 1e-9
_LOG_MIN_MASS = math.log(1e-300)


@dataclass(frozen=True)
class TestDirection:
    """Linear functional whose value at the response is the tested
    coefficient."""

    feature: int
    eta: np.ndarray
    z_obs: float
    sigma_T: float


@dataclass(frozen=True)
class SelectiveTestResult:
    feature: int
    beta_hat: float
    p_selective: float
    p_naive: float
    p_oc: float
    truncation: IntervalSet
    segments_visited: int


def build_test_direction(
    dataset: MaskedDataset,
    imputation: ImputationMap | None,
    outliers: tuple[int, ...],
    features: tuple[int, ...],
    feature: int,
    model: GaussianModel,
) -> TestDirection:
    """Direction ``eta`` with ``eta @ y_obs`` equal to the coefficient of
    ``feature`` in the least squares fit on the outlier-free, imputed,
    selected-columns dataset."""
    if feature not in features:
        raise ValueError(f"feature {feature} is not among the selected {features}")
    rows = np.setdiff1d(np.arange(dataset.n), np.asarray(outliers, dtype=int))
    cols = np.asarray(features, dtype=int)
    if rows.size <= cols.size:
        raise DegreesOfFreedomError(
            f"need more kept rows than selected features, got "
            f"{rows.size} x {cols.size}"
        )
    fit = FitContext(dataset.X[np.ix_(rows, cols)])
    pos = int(np.nonzero(cols == feature)[0][0])
    weights = fit.coef_map()[pos]  # row of (X'X)^{-1} X'
    full = np.zeros(dataset.n)
    full[rows] = weights
    eta = imputation.D.T @ full if imputation is not None else full
    norm_sq = float(eta @ eta)
    if norm_sq <= 0.0:
        raise RankError(f"test direction for feature {feature} vanished")
    z_obs = float(eta @ dataset.y_obs)
    return TestDirection(feature=feature, eta=eta, z_obs=z_obs,
                         sigma_T=model.sigma * math.sqrt(norm_sq))


def decompose(y_obs: np.ndarray, eta: np.ndarray) -> ParamLine:
    """Split the response into the component along ``eta`` and the orthogonal
    remainder: ``y = a + b * (eta @ y)`` with ``eta @ a = 0``."""
    norm_sq = float(eta @ eta)
    if norm_sq <= 0.0:
        raise ValueError("eta must be nonzero")
    b = eta / norm_sq
    a = y_obs - b * float(eta @ y_obs)
    return ParamLine(a=a, b=b)


def _log1mexp(x: float) -> float:
    """log(1 - exp(x)) for x <= 0, stable at both ends."""
    if x >= 0.0:
        return -INF if x == 0.0 else math.nan
    if x > -math.log(2.0):
        return math.log(-math.expm1(x))
    return math.log1p(-math.exp(x))


def log_gauss_mass(lo: float, hi: float, sigma: float) -> float:
    """log P(lo <= T <= hi) for T ~ N(0, sigma^2), accurate deep in the
    tails."""
    if hi <= lo:
        return -INF
    lo_s = lo / sigma if math.isfinite(lo) else -INF
    hi_s = hi / sigma if math.isfinite(hi) else INF
    if lo_s >= 0.0:  # right tail: Q(lo) - Q(hi)
        la = log_ndtr(-lo_s)
        lb = log_ndtr(-hi_s) if math.isfinite(hi_s) else -INF
        return la + _log1mexp(min(lb - la, 0.0)) if lb > -INF else la
    if hi_s <= 0.0:  # left tail, by symmetry
        la = log_ndtr(hi_s)
        lb = log_ndtr(lo_s) if math.isfinite(lo_s) else -INF
        return la + _log1mexp(min(lb - la, 0.0)) if lb > -INF else la
    # Straddles the mean: sum of two half-masses, no cancellation.
    left = math.erf(-lo_s / math.sqrt(2.0)) if math.isfinite(lo_s) else 1.0
    right = math.erf(hi_s / math.sqrt(2.0)) if math.isfinite(hi_s) else 1.0
    return math.log(0.5) + math.log(left + right)


def _logsumexp(values: list[float]) -> float:
    finite = [v for v in values if v > -INF]
    if not finite:
        return -INF
    return float(logsumexp(np.asarray(finite)))


def tn_two_sided_p(t_obs: float, sigma_T: float, Z: IntervalSet) -> float:
    """Two-sided p-value of ``t_obs`` under N(0, sigma_T^2) truncated to
    ``Z``: mass of ``Z`` beyond ``|t_obs|`` over the mass of ``Z``."""
    if Z.is_empty:
        raise ValueError("truncation set is empty")
    if not Z.contains(t_obs):
        gap = Z.nearest_boundary_distance(t_obs)
        if gap > _BOUNDARY_TOL * max(1.0, abs(t_obs)):
            raise ValueError(
                f"t_obs={t_obs} lies outside the truncation set "
                f"(distance {gap:.3e})"
            )
        # Solver noise put the statistic just past an endpoint; snap inside.
        ends = [e for p in Z.parts for e in (p.lo, p.hi) if math.isfinite(e)]
        t_obs = min(ends, key=lambda e: abs(e - t_obs))
    log_den = _logsumexp([log_gauss_mass(p.lo, p.hi, sigma_T) for p in Z.parts])
    if log_den < _LOG_MIN_MASS:
        raise DegenerateTruncationError(
            f"truncation set mass exp({log_den:.1f}) is numerically zero"
        )
    t = abs(t_obs)
    tails = Z.intersect_interval(Interval(-INF, -t)).parts + \
        Z.intersect_interval(Interval(t, INF)).parts
    log_num = _logsumexp([log_gauss_mass(p.lo, p.hi, sigma_T) for p in tails])
    if log_num == -INF:
        return 0.0
    return float(min(1.0, math.exp(min(log_num - log_den, 0.0))))


def naive_two_sided_p(t_obs: float, sigma_T: float) -> float:
    """Classical two-sided z-test p-value, no conditioning."""
    return float(min(1.0, 2.0 * math.exp(log_ndtr(-abs(t_obs) / sigma_T))))


def search_window(z_obs: float, sigma_T: float,
                  width: float = WINDOW_SIGMAS) -> Interval:
    half = abs(z_obs) + width * sigma_T
    return Interval(-half, half)


def test_single_feature(
    graph: PipelineGraph,
    dataset: MaskedDataset,
    model: GaussianModel,
    output: PipelineOutput,
    imputation: ImputationMap | None,
    feature: int,
) -> SelectiveTestResult:
    """Selective, naive, and over-conditioned p-values for one selected
    feature."""
    direction = build_test_direction(
        dataset, imputation, output.outliers, output.features, feature, model
    )
    line = decompose(dataset.y_obs, direction.eta)
    window = search_window(direction.z_obs, direction.sigma_T)
    context = SearchContext(graph, dataset, line.a, line.b)
    target = (output.features, output.outliers)
    truncation, visited = line_search_truncation(
        graph, dataset, line.a, line.b, target, window, context
    )
    if not truncation.contains(direction.z_obs, _BOUNDARY_TOL):
        raise SearchStallError(
            f"observed statistic {direction.z_obs} not covered by the "
            f"truncation set for feature {feature}"
        )
    # Over-conditioned variant: only the segment the statistic sits in.
    at_obs = update_interval(graph, dataset, line.a, line.b,
                             direction.z_obs, context)
    oc_part = at_obs.interval.clip_to(window.lo, window.hi)
    oc_set = IntervalSet([oc_part]) if oc_part is not None else truncation
    return SelectiveTestResult(
        feature=feature,
        beta_hat=direction.z_obs,
        p_selective=tn_two_sided_p(direction.z_obs, direction.sigma_T,
                                   truncation),
        p_naive=naive_two_sided_p(direction.z_obs, direction.sigma_T),
        p_oc=tn_two_sided_p(direction.z_obs, direction.sigma_T, oc_set),
        truncation=truncation,
        segments_visited=visited,
    )


def test_features(
    graph: PipelineGraph,
    dataset: MaskedDataset,
    model: GaussianModel,
    features: tuple[int, ...] | None = None,
) -> list[SelectiveTestResult]:
    """Run the pipeline and test every selected feature (or the requested
    subset).  An empty selection yields an empty list."""
    mvi = graph.mvi_node
    imputation = (build_imputation_map(mvi.method, dataset.X,
                                       dataset.miss_mask)
                  if mvi is not None else None)
    output = run_pipeline(graph, dataset, imputation=imputation)
    tested = output.features if features is None else tuple(features)
    return [
        test_single_feature(graph, dataset, model, output, imputation, j)
        for j in tested
    ]
