"""Closed intervals on the extended real line and a quadratic-inequality kernel.

The kernel :func:`solve_quadratic_inequality` is the single primitive behind
every selection-event interval in this package: each event is an intersection
of constraints of the form ``alpha*r**2 + beta*r + gamma <= 0`` known to hold
at the current parameter value ``z``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .exceptions import InfeasibleAtPointError

INF = math.inf

# Quadratics degenerate to linear/constant below these relative thresholds.
_ALPHA_TOL = 1e-12
# Constraint value at z may exceed zero by this much (relative to |gamma|)
# before we declare the characterization inconsistent.
_FEAS_TOL = 1e-9
# Adjacent intervals closer than this merge into one.
MERGE_TOL = 1e-12


@dataclass(frozen=True, slots=True)
class Interval:
    """Closed interval ``[lo, hi]``; endpoints may be ``-inf`` / ``+inf``."""

    lo: float
    hi: float

    def __post_init__(self) -> None:
        if math.isnan(self.lo) or math.isnan(self.hi):
            raise ValueError("interval endpoints must not be NaN")
        if self.lo > self.hi:
            raise ValueError(f"empty interval: lo={self.lo} > hi={self.hi}")
        if self.lo == INF or self.hi == -INF:
            raise ValueError("interval must intersect the real line")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, x: float, tol: float = 0.0) -> bool:
        return self.lo - tol <= x <= self.hi + tol

    def intersect(self, other: "Interval") -> "Interval | None":
        lo, hi = max(self.lo, other.lo), min(self.hi, other.hi)
        return Interval(lo, hi) if lo <= hi else None

    def clip_to(self, lo: float, hi: float) -> "Interval | None":
        return self.intersect(Interval(lo, hi))


WHOLE_LINE = Interval(-INF, INF)


class IntervalSet:
    """Ordered union of pairwise-disjoint closed intervals.

    Construction normalizes: parts are sorted by ``lo``, and parts separated
    by a gap smaller than ``MERGE_TOL`` are merged, so root-finding noise
    cannot fragment the set.
    """

    __slots__ = ("parts",)

    def __init__(self, parts: Iterable[Interval] = ()):
        self.parts: tuple[Interval, ...] = _normalize(parts)

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence[float]]) -> "IntervalSet":
        return cls(Interval(float(lo), float(hi)) for lo, hi in pairs)

    def to_pairs(self) -> list[tuple[float, float]]:
        return [(p.lo, p.hi) for p in self.parts]

    def __len__(self) -> int:
        return len(self.parts)

    def __iter__(self):
        return iter(self.parts)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, IntervalSet) and self.parts == other.parts

    def __repr__(self) -> str:
        body = " ∪ ".join(f"[{p.lo:.6g}, {p.hi:.6g}]" for p in self.parts)
        return f"IntervalSet({body or '∅'})"

    @property
    def is_empty(self) -> bool:
        return not self.parts

    def contains(self, x: float, tol: float = 0.0) -> bool:
        return any(p.contains(x, tol) for p in self.parts)

    def total_width(self) -> float:
        return sum(p.width for p in self.parts)

    def intersect_interval(self, iv: Interval) -> "IntervalSet":
        out = []
        for p in self.parts:
            q = p.intersect(iv)
            if q is not None:
                out.append(q)
        return IntervalSet(out)

    def union(self, other: "IntervalSet") -> "IntervalSet":
        return IntervalSet((*self.parts, *other.parts))

    def nearest_boundary_distance(self, x: float) -> float:
        """Distance from ``x`` to the closest finite endpoint."""
        dists = [
            abs(x - e)
            for p in self.parts
            for e in (p.lo, p.hi)
            if math.isfinite(e)
        ]
        return min(dists, default=INF)


def _normalize(parts: Iterable[Interval]) -> tuple[Interval, ...]:
    items = sorted(parts, key=lambda p: (p.lo, p.hi))
    merged: list[Interval] = []
    for p in items:
        if merged and p.lo <= merged[-1].hi + MERGE_TOL:
            last = merged[-1]
            if p.hi > last.hi:
                merged[-1] = Interval(last.lo, p.hi)
        else:
            merged.append(p)
    return tuple(merged)


def _quadratic_roots(alpha: float, beta: float, gamma: float) -> tuple[float, float]:
    """Real roots of ``alpha*x^2 + beta*x + gamma`` (alpha != 0), ascending.

    Uses the cancellation-free form: the larger-magnitude root comes from the
    standard formula with the sign of ``beta`` chosen to avoid subtraction,
    the other from Vieta's product.
    """
    disc = beta * beta - 4.0 * alpha * gamma
    if disc < 0.0:
        raise ValueError("negative discriminant")
    sq = math.sqrt(disc)
    if beta >= 0.0:
        q = -0.5 * (beta + sq)
    else:
        q = -0.5 * (beta - sq)
    if q != 0.0:
        r1, r2 = q / alpha, gamma / q
    else:
        # beta == 0 and gamma/alpha <= 0
        r = math.sqrt(max(-gamma / alpha, 0.0))
        r1, r2 = -r, r
    return (r1, r2) if r1 <= r2 else (r2, r1)


def solve_quadratic_inequality(
    alpha: float, beta: float, gamma: float, z: float
) -> Interval:
    """Maximal interval containing ``z`` where ``alpha*r^2+beta*r+gamma <= 0``.

    The inequality must hold at ``z`` up to a feasibility tolerance of
    ``1e-9 * max(1, |gamma|)``; small violations are clamped to the boundary.
    Raises :class:`InfeasibleAtPointError` for larger violations, which
    indicate a bug in whatever characterized the constraint.
    """
    feas_tol = _FEAS_TOL * max(1.0, abs(gamma))
    value_at_z = (alpha * z + beta) * z + gamma
    if value_at_z > feas_tol:
        raise InfeasibleAtPointError(
            f"constraint {alpha}*r^2 + {beta}*r + {gamma} <= 0 violated at "
            f"r={z}: value {value_at_z:.3e} exceeds tolerance {feas_tol:.3e}"
        )

    scale = max(abs(beta), abs(gamma), 1.0)
    if abs(alpha) <= _ALPHA_TOL * scale:
        # Linear or constant constraint.
        if abs(beta) <= _ALPHA_TOL * max(abs(gamma), 1.0):
            return WHOLE_LINE
        bound = -gamma / beta
        if beta > 0.0:
            return Interval(-INF, max(bound, z))
        return Interval(min(bound, z), INF)

    disc = beta * beta - 4.0 * alpha * gamma
    if alpha > 0.0:
        if disc < 0.0:
            # Feasible at z only through the tolerance: a near-tangency.
            return Interval(z, z)
        lo, hi = _quadratic_roots(alpha, beta, gamma)
        return Interval(min(lo, z), max(hi, z))

    # alpha < 0: feasible set is the complement of the open root interval.
    if disc <= 0.0:
        return WHOLE_LINE
    lo, hi = _quadratic_roots(alpha, beta, gamma)
    if z <= 0.5 * (lo + hi):
        return Interval(-INF, max(lo, z))
    return Interval(min(hi, z), INF)


def intersect_constraints(
    coeffs: Iterable[tuple[float, float, float]], z: float
) -> Interval:
    """Intersect the feasible intervals of many ``<= 0`` constraints at ``z``."""
    lo, hi = -INF, INF
    for alpha, beta, gamma in coeffs:
        iv = solve_quadratic_inequality(alpha, beta, gamma, z)
        if iv.lo > lo:
            lo = iv.lo
        if iv.hi < hi:
            hi = iv.hi
    return Interval(min(lo, z), max(hi, z))


def intersect_linear_constraints(slopes, consts, z: float) -> Interval:
    """Vectorized version of the kernel for batches of linear constraints
    ``consts[i] + slopes[i] * r <= 0``, with identical tolerance semantics."""
    import numpy as np

    slopes = np.asarray(slopes, dtype=float).ravel()
    consts = np.asarray(consts, dtype=float).ravel()
    if slopes.size == 0:
        return WHOLE_LINE
    values = consts + slopes * z
    feas = _FEAS_TOL * np.maximum(1.0, np.abs(consts))
    bad = values > feas
    if bad.any():
        i = int(np.argmax(values - feas))
        raise InfeasibleAtPointError(
            f"linear constraint {consts[i]} + {slopes[i]}*r <= 0 violated at "
            f"r={z}: value {values[i]:.3e} exceeds tolerance {feas[i]:.3e}"
        )
    live = np.abs(slopes) > _ALPHA_TOL * np.maximum(np.abs(consts), 1.0)
    lo, hi = -INF, INF
    pos = live & (slopes > 0.0)
    neg = live & (slopes < 0.0)
    if pos.any():
        hi = float(np.min(-consts[pos] / slopes[pos]))
    if neg.any():
        lo = float(np.max(-consts[neg] / slopes[neg]))
    return Interval(min(lo, z), max(hi, z))
