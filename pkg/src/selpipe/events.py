"""Per-component selection events.

For a response moving along the line ``y(r) = a + b*r``, each function runs
its forward algorithm at ``r = z`` and returns both the selection made there
and the maximal interval around ``z`` on which that selection provably stays
constant.  Every event reduces to an intersection of quadratic (or linear)
inequalities in ``r`` that hold at ``z``; directions are normalized so each
constraint reads "<= 0 at z".

A mutable ``workspace`` dict may be supplied to reuse quantities that do not
depend on ``z`` (projections of ``a`` and ``b``, fitted QR factors, solver
warm starts) across repeated calls with the same sub-frame, which is the hot
path of the truncation-set line search.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .components import (
    FitContext,
    detect_outliers_cook,
    detect_outliers_dffits,
    detect_outliers_soft_ipod,
    select_lasso,
    select_marginal,
    select_stepwise,
)
from .components import RESID_NOISE_TOL as _RESID_NOISE_TOL
from .exceptions import RankError
from .intervals import (
    Interval,
    intersect_constraints,
    intersect_linear_constraints,
)

_COLLINEAR_TOL = 1e-12


@dataclass(frozen=True)
class ParamLine:
    """The response line ``y(r) = a + b*r``."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        if self.a.shape != self.b.shape:
            raise ValueError("a and b must have the same length")

    def at(self, r: float) -> np.ndarray:
        return self.a + self.b * r


@dataclass(frozen=True)
class EventResult:
    """Selection at ``z`` (indices local to the given sub-frame) and an
    interval containing ``z`` on which it is constant."""

    selection: tuple[int, ...]
    interval: Interval


def fs_event(method: str, X_sub: np.ndarray, line: ParamLine, z: float,
             param, workspace: dict | None = None) -> EventResult:
    ws = workspace if workspace is not None else {}
    if method == "marginal":
        return _marginal_event(X_sub, line, z, param, ws)
    if method == "stepwise":
        return _stepwise_event(X_sub, line, z, param, ws)
    if method == "lasso":
        return _lasso_event(X_sub, line, z, param, ws)
    raise ValueError(f"unknown feature selection method {method!r}")


def od_event(method: str, X_sub: np.ndarray, line: ParamLine, z: float,
             lam: float, workspace: dict | None = None) -> EventResult:
    ws = workspace if workspace is not None else {}
    if method == "cook":
        return _cook_event(X_sub, line, z, lam, ws)
    if method == "dffits":
        return _dffits_event(X_sub, line, z, lam, ws)
    if method == "soft_ipod":
        return _soft_ipod_event(X_sub, line, z, lam, ws)
    raise ValueError(f"unknown outlier detection method {method!r}")


# -- feature selection ------------------------------------------------------


def _marginal_event(X, line, z, k, ws):
    selection = select_marginal(X, line.at(z), k)
    if "marg" not in ws:
        norms = np.linalg.norm(X, axis=0)
        ws["marg"] = (X.T @ line.a / norms, X.T @ line.b / norms)
    ca, cb = ws["marg"]
    d = X.shape[1]
    if k == d:
        return EventResult(selection, Interval(-np.inf, np.inf))

    cz = ca + z * cb
    signs = np.where(cz >= 0.0, 1.0, -1.0)
    sel = np.asarray(selection, dtype=int)
    out = np.setdiff1d(np.arange(d), sel, assume_unique=True)
    # For selected j and unselected l, the score ordering
    # |c_j(r)| >= |c_l(r)| with |.| resolved by its sign at z gives the two
    # linear constraints  +-s_l c_l(r) - s_j c_j(r) <= 0.
    sa, sb = signs[sel] * ca[sel], signs[sel] * cb[sel]
    oa, ob = signs[out] * ca[out], signs[out] * cb[out]
    diff_a = oa[None, :] - sa[:, None]
    diff_b = ob[None, :] - sb[:, None]
    sum_a = -oa[None, :] - sa[:, None]
    sum_b = -ob[None, :] - sb[:, None]
    slopes = np.concatenate([diff_b.ravel(), sum_b.ravel()])
    consts = np.concatenate([diff_a.ravel(), sum_a.ravel()])
    return EventResult(selection, intersect_linear_constraints(slopes, consts, z))


def _stepwise_event(X, line, z, k, ws):
    selection, path = select_stepwise(X, line.at(z), k, return_path=True)
    a, b = line.a, line.b
    n, d = X.shape
    base_sq = np.einsum("ij,ij->j", X, X)
    Xr = X.copy()
    taken: list[int] = []
    coeffs: list[tuple[float, float, float]] = []

    def step_quantities():
        norms_sq = np.einsum("ij,ij->j", Xr, Xr)
        eligible = norms_sq > _COLLINEAR_TOL * np.maximum(base_sq, 1.0)
        for t in taken:
            eligible[t] = False
        ta, tb = Xr.T @ a, Xr.T @ b
        return norms_sq, eligible, ta, tb

    for j_t in path:
        norms_sq, eligible, ta, tb = step_quantities()
        nj = norms_sq[j_t]
        # Winner j_t beat every other eligible candidate l on the gain
        # (x~_l^T y(r))^2 / ||x~_l||^2; each comparison is quadratic in r.
        for l in np.nonzero(eligible)[0]:
            if l == j_t:
                continue
            nl = norms_sq[l]
            coeffs.append((
                tb[l] ** 2 / nl - tb[j_t] ** 2 / nj,
                2.0 * (ta[l] * tb[l] / nl - ta[j_t] * tb[j_t] / nj),
                ta[l] ** 2 / nl - ta[j_t] ** 2 / nj,
            ))
        taken.append(int(j_t))
        q = Xr[:, j_t] / np.sqrt(nj)
        Xr = Xr - np.outer(q, q @ Xr)

    if len(path) < k:
        # Early stop: every remaining candidate's gain was (numerically)
        # zero, so its projected score must stay at zero.
        _, eligible, ta, tb = step_quantities()
        for l in np.nonzero(eligible)[0]:
            coeffs.append((tb[l] ** 2, 2.0 * ta[l] * tb[l], ta[l] ** 2))

    return EventResult(selection, intersect_constraints(coeffs, z))


def _lasso_event(X, line, z, lam, ws):
    selection, beta = select_lasso(X, line.at(z), lam,
                                   warm_start=ws.get("warm"), return_coef=True)
    ws["warm"] = beta
    n = X.shape[0]
    a, b = line.a, line.b
    active = np.asarray(selection, dtype=int)
    inactive = np.setdiff1d(np.arange(X.shape[1]), active, assume_unique=True)

    if active.size == 0:
        resid_a, resid_b = a, b
        sign_slopes = sign_consts = np.empty(0)
    else:
        XA = X[:, active]
        gram = XA.T @ XA
        signs = np.sign(beta[active])
        try:
            coef_a = np.linalg.solve(gram, XA.T @ a - n * lam * signs)
            coef_b = np.linalg.solve(gram, XA.T @ b)
        except np.linalg.LinAlgError:
            raise RankError("active set of the lasso is collinear") from None
        # Coefficient path is affine in r; each active sign must persist.
        sign_slopes = -signs * coef_b
        sign_consts = -signs * coef_a
        resid_a = a - XA @ coef_a
        resid_b = b - XA @ coef_b

    if inactive.size:
        ga = X[:, inactive].T @ resid_a / n
        gb = X[:, inactive].T @ resid_b / n
        sub_slopes = np.concatenate([gb, -gb])
        sub_consts = np.concatenate([ga - lam, -ga - lam])
    else:
        sub_slopes = sub_consts = np.empty(0)

    interval = intersect_linear_constraints(
        np.concatenate([sign_slopes, sub_slopes]),
        np.concatenate([sign_consts, sub_consts]),
        z,
    )
    return EventResult(selection, interval)


# -- outlier detection ------------------------------------------------------


def _fit_and_lines(X, line, ws) -> tuple[FitContext, np.ndarray, np.ndarray]:
    if "fit" not in ws:
        fit = FitContext(X)
        ws["fit"] = (fit, fit.residualize(line.a), fit.residualize(line.b))
    return ws["fit"]


def _influence_event(X, line, z, lam, ws, forward, weights):
    """Shared skeleton of the Cook / DFFITS events.

    ``weights(h, n, d, lam)`` returns per-row ``(w1, w2)`` such that row ``i``
    is flagged iff ``w1_i * eps_i(r)^2 - w2_i * ||eps(r)||^2 > 0``, where
    ``eps`` is the residual of the line under the fixed sub-design.
    """
    fit, p, q = _fit_and_lines(X, line, ws)
    flagged = forward(X, line.at(z), lam, ctx=fit)
    sqq, spq, spp = float(q @ q), float(p @ q), float(p @ p)
    # Both line components in the column space: residuals are round-off for
    # every r, so nothing is ever flagged and no constraint binds.
    noise_sq = _RESID_NOISE_TOL**2
    if (spp <= noise_sq * max(float(line.a @ line.a), 1e-300)
            and sqq <= noise_sq * max(float(line.b @ line.b), 1e-300)):
        return EventResult(flagged, Interval(-np.inf, np.inf))
    w1, w2 = weights(fit.leverages, fit.n, fit.d, lam)
    flag_mask = np.zeros(fit.n, dtype=bool)
    flag_mask[list(flagged)] = True
    # Quadratic per row; direction matches the classification at z.
    alphas = w1 * q**2 - w2 * sqq
    betas = 2.0 * (w1 * p * q - w2 * spq)
    gammas = w1 * p**2 - w2 * spp
    sign = np.where(flag_mask, -1.0, 1.0)
    coeffs = zip(sign * alphas, sign * betas, sign * gammas)
    return EventResult(flagged, intersect_constraints(coeffs, z))


def _cook_event(X, line, z, lam, ws):
    def weights(h, n, d, lam):
        return h * (n - d) / (1.0 - h) ** 2, np.full(h.shape, lam * d)

    return _influence_event(X, line, z, lam, ws, detect_outliers_cook, weights)


def _dffits_event(X, line, z, lam, ws):
    def weights(h, n, d, lam):
        return (h * (n - d) * (n - d - 1) + lam * d * (1.0 - h),
                lam * d * (1.0 - h) ** 2)

    return _influence_event(X, line, z, lam, ws, detect_outliers_dffits, weights)


def _soft_ipod_event(X, line, z, lam, ws):
    if "ipod" not in ws:
        fit = FitContext(X)
        P = fit.annihilator
        ws["ipod"] = (fit, P, P @ line.a, P @ line.b)
    fit, P, pa, pb = ws["ipod"]
    selection, u = detect_outliers_soft_ipod(
        X, line.at(z), lam, ctx=fit, warm_start=ws.get("warm"),
        return_coef=True,
    )
    ws["warm"] = u
    n = X.shape[0]
    active = np.asarray(selection, dtype=int)
    inactive = np.setdiff1d(np.arange(n), active, assume_unique=True)

    if active.size == 0:
        resid_a, resid_b = pa, pb
        sign_slopes = sign_consts = np.empty(0)
    else:
        signs = np.sign(u[active])
        gram = P[np.ix_(active, active)]
        try:
            coef_a = np.linalg.solve(gram, pa[active] - n * lam * signs)
            coef_b = np.linalg.solve(gram, pb[active])
        except np.linalg.LinAlgError:
            raise RankError("active rows of the mean-shift fit are "
                            "collinear under the residual projector") from None
        sign_slopes = -signs * coef_b
        sign_consts = -signs * coef_a
        PA = P[:, active]
        resid_a = pa - PA @ coef_a
        resid_b = pb - PA @ coef_b

    if inactive.size:
        ga = resid_a[inactive] / n
        gb = resid_b[inactive] / n
        sub_slopes = np.concatenate([gb, -gb])
        sub_consts = np.concatenate([ga - lam, -ga - lam])
    else:
        sub_slopes = sub_consts = np.empty(0)

    interval = intersect_linear_constraints(
        np.concatenate([sign_slopes, sub_slopes]),
        np.concatenate([sign_consts, sub_consts]),
        z,
    )
    return EventResult(selection, interval)
