import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from selpipe.exceptions import InfeasibleAtPointError
from selpipe.intervals import (
    Interval,
    IntervalSet,
    intersect_constraints,
    intersect_linear_constraints,
    solve_quadratic_inequality,
)

from oracles import quad_feasible_grid


class TestQuadraticKernel:
    def test_parabola_between_roots(self):
        iv = solve_quadratic_inequality(1.0, 0.0, -1.0, 0.0)
        assert iv == Interval(-1.0, 1.0)

    def test_satisfied_constant(self):
        iv = solve_quadratic_inequality(0.0, 0.0, -1.0, 5.0)
        assert iv == Interval(-math.inf, math.inf)

    def test_linear(self):
        iv = solve_quadratic_inequality(0.0, 1.0, 0.0, -2.0)
        assert iv == Interval(-math.inf, 0.0)

    def test_violated_constant_raises(self):
        with pytest.raises(InfeasibleAtPointError):
            solve_quadratic_inequality(0.0, 0.0, 1.0, 0.0)

    def test_violated_at_point_raises(self):
        with pytest.raises(InfeasibleAtPointError):
            solve_quadratic_inequality(1.0, 0.0, -1.0, 5.0)

    def test_downward_parabola_picks_side_containing_z(self):
        # -(r-1)(r+1) <= 0 on (-inf,-1] u [1,inf)
        left = solve_quadratic_inequality(-1.0, 0.0, 1.0, -3.0)
        right = solve_quadratic_inequality(-1.0, 0.0, 1.0, 3.0)
        assert left == Interval(-math.inf, -1.0)
        assert right == Interval(1.0, math.inf)

    def test_downward_parabola_no_roots_is_whole_line(self):
        assert solve_quadratic_inequality(-1.0, 0.0, -1.0, 0.7) == \
            Interval(-math.inf, math.inf)

    def test_small_violation_clamps_to_boundary(self):
        # value at z is 1e-12, within the feasibility tolerance
        iv = solve_quadratic_inequality(1.0, 0.0, -1.0, 1.0 + 4e-13)
        assert iv.contains(1.0 + 4e-13)

    @given(
        alpha=st.floats(-4, 4),
        beta=st.floats(-4, 4),
        gamma=st.floats(-4, 4),
        z=st.floats(-8, 8),
    )
    @settings(max_examples=300, deadline=None)
    def test_agrees_with_grid_oracle(self, alpha, beta, gamma, z):
        value = (alpha * z + beta) * z + gamma
        if value > 0.0:
            return  # infeasible seed point, covered by explicit raise tests
        iv = solve_quadratic_inequality(alpha, beta, gamma, z)
        assert iv.contains(z)
        inside = np.linspace(max(iv.lo, -50.0), min(iv.hi, 50.0), 41)
        vals = (alpha * inside + beta) * inside + gamma
        assert np.all(vals <= 1e-9 * max(1.0, abs(gamma)) + 1e-12)
        # points strictly outside violate the inequality (grid oracle)
        feasible = quad_feasible_grid(alpha, beta, gamma, -50.0, 50.0)
        for r in feasible:
            if -50.0 < r < 50.0:
                assert iv.lo - 1e-6 <= r or r <= iv.hi + 1e-6

    def test_outside_points_violate(self, rng):
        for _ in range(200):
            alpha, beta, gamma = rng.uniform(-3, 3, size=3)
            z = rng.uniform(-5, 5)
            if (alpha * z + beta) * z + gamma > 0:
                continue
            iv = solve_quadratic_inequality(alpha, beta, gamma, z)
            for endpoint, sign in ((iv.lo, -1.0), (iv.hi, 1.0)):
                if not math.isfinite(endpoint):
                    continue
                r = endpoint + sign * 1e-4
                value = (alpha * r + beta) * r + gamma
                # beyond a simple root the constraint must fail; tangencies
                # (double roots) are the only exception
                disc = beta * beta - 4 * alpha * gamma
                if abs(disc) > 1e-8:
                    assert value > -1e-9


class TestIntervalSet:
    def test_normalization_sorts_and_merges(self):
        s = IntervalSet([Interval(3.0, 4.0), Interval(0.0, 1.0),
                         Interval(1.0 + 1e-13, 2.0)])
        assert s.to_pairs() == [(0.0, 2.0), (3.0, 4.0)]

    def test_normalization_idempotent(self):
        s = IntervalSet([Interval(0.0, 1.0), Interval(0.5, 2.0),
                         Interval(5.0, 6.0)])
        again = IntervalSet(s.parts)
        assert s == again

    @given(st.lists(st.tuples(st.floats(-100, 100), st.floats(0, 10)),
                    max_size=12))
    @settings(max_examples=200, deadline=None)
    def test_idempotent_property(self, raw):
        parts = [Interval(lo, lo + width) for lo, width in raw]
        once = IntervalSet(parts)
        twice = IntervalSet(once.parts)
        assert once == twice
        # disjoint and ordered
        for left, right in zip(once.parts, once.parts[1:]):
            assert left.hi < right.lo

    def test_membership_and_intersection(self):
        s = IntervalSet.from_pairs([(-1.0, 1.0), (2.0, 3.0)])
        assert s.contains(0.5) and s.contains(2.0) and not s.contains(1.5)
        cut = s.intersect_interval(Interval(0.0, 2.5))
        assert cut.to_pairs() == [(0.0, 1.0), (2.0, 2.5)]

    def test_empty_interval_rejected(self):
        with pytest.raises(ValueError):
            Interval(2.0, 1.0)
        with pytest.raises(ValueError):
            Interval(math.nan, 1.0)


class TestVectorizedLinear:
    def test_matches_scalar_kernel(self, rng):
        for _ in range(100):
            m = rng.integers(1, 8)
            slopes = rng.uniform(-2, 2, size=m)
            consts = rng.uniform(-2, 2, size=m)
            z = rng.uniform(-3, 3)
            if np.any(consts + slopes * z > 0):
                continue
            fast = intersect_linear_constraints(slopes, consts, z)
            slow = intersect_constraints(
                [(0.0, float(s), float(c)) for s, c in zip(slopes, consts)], z
            )
            assert fast.lo == pytest.approx(slow.lo, abs=1e-12)
            assert fast.hi == pytest.approx(slow.hi, abs=1e-12)

    def test_infeasible_raises(self):
        with pytest.raises(InfeasibleAtPointError):
            intersect_linear_constraints([1.0], [1.0], 0.5)
