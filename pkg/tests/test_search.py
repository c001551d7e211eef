import math

import numpy as np
import pytest

from selpipe.components import build_imputation_map, run_pipeline
from selpipe.data import GaussianModel
from selpipe.graph import Node, PipelineGraph
from selpipe.inference import build_test_direction, decompose, search_window
from selpipe.intervals import Interval
from selpipe.presets import option1
from selpipe.search import (
    NodeState,
    SearchContext,
    apply_update_rule,
    line_search_truncation,
    update_interval,
)

from conftest import make_dataset, random_runnable_instance


def observed_line(graph, ds, feature=None):
    """Decomposition of the observed response along the first (or given)
    selected feature's test direction."""
    mvi = graph.mvi_node
    imp = (build_imputation_map(mvi.method, ds.X, ds.miss_mask)
           if mvi else None)
    out = run_pipeline(graph, ds, imputation=imp)
    j = out.features[0] if feature is None else feature
    direction = build_test_direction(ds, imp, out.outliers, out.features, j,
                                     GaussianModel(1.0))
    return out, direction, decompose(ds.y_obs, direction.eta)


def mvi_only_graph(method="mean"):
    return PipelineGraph(
        [Node(0, "source"), Node(1, "mvi", method), Node(2, "sink")],
        [(0, 1), (1, 2)],
    )


class TestApplyUpdateRule:
    def _mk(self, a, b, feats, outs, lo, hi):
        return NodeState(a, b, feats, outs, lo, hi)

    def test_combine_union_tightens_interval(self, rng):
        ds = make_dataset(rng, 6, 4, miss_prob=0.0)
        ctx = SearchContext(mvi_only_graph(), ds, ds.y_obs.copy(),
                            np.ones(6) / 6)
        a, b = ctx.imputed_line.a, ctx.imputed_line.b
        left = self._mk(a, b, (1, 2), (), -1.0, 2.0)
        right = self._mk(a, b, (2, 3), (), 0.0, 3.0)
        node = Node(5, "combine_features", "union")
        out = apply_update_rule(node, [left, right], 0.5, ctx)
        assert out.features == (1, 2, 3)
        assert (out.lo, out.hi) == (0.0, 2.0)

    def test_combine_intersection(self, rng):
        ds = make_dataset(rng, 6, 4, miss_prob=0.0)
        ctx = SearchContext(mvi_only_graph(), ds, ds.y_obs.copy(),
                            np.ones(6) / 6)
        a, b = ctx.imputed_line.a, ctx.imputed_line.b
        left = self._mk(a, b, (1, 2), (), -1.0, 2.0)
        right = self._mk(a, b, (2, 3), (), 0.0, 3.0)
        node = Node(5, "combine_features", "intersection")
        out = apply_update_rule(node, [left, right], 0.5, ctx)
        assert out.features == (2,)

    def test_identity_imputation_keeps_state(self, rng):
        ds = make_dataset(rng, 6, 3, miss_prob=0.0)
        graph = mvi_only_graph()
        ctx = SearchContext(graph, ds, ds.y_obs.copy(), np.ones(6) / 6)
        src = self._mk(ctx.obs_line.a, ctx.obs_line.b, (0, 1, 2), (),
                       -math.inf, math.inf)
        out = apply_update_rule(graph.nodes[1], [src], 0.0, ctx)
        assert np.allclose(out.a, src.a)
        assert out.features == src.features and out.outliers == src.outliers

    def test_detector_tightens_only_with_its_event(self, rng):
        # FS node whose event interval [-0.5, 0.7] lands in state (-1, 0.6)
        ds = make_dataset(rng, 30, 4, miss_prob=0.0)
        graph = PipelineGraph(
            [Node(0, "source"), Node(1, "fs", "marginal", 2),
             Node(2, "sink")],
            [(0, 1), (1, 2)],
        )
        out, direction, line = observed_line_for_marginal(graph, ds)
        ctx = SearchContext(graph, ds, line.a, line.b)
        state = self._mk(ctx.obs_line.a, ctx.obs_line.b, (0, 1, 2, 3), (),
                         -1e-3, 1e-3)
        new = apply_update_rule(graph.nodes[1], [state], direction.z_obs,
                                ctx)
        # a tiny prior interval stays when the event interval is wider
        assert new.lo <= -1e-3 + 1e-12 and new.hi >= 1e-3 - 1e-12 or (
            new.lo >= -1e-3 and new.hi <= 1e-3
        )


def observed_line_for_marginal(graph, ds):
    out = run_pipeline(graph, ds)
    j = out.features[0]
    direction = build_test_direction(ds, None, out.outliers, out.features, j,
                                     GaussianModel(1.0))
    return out, direction, decompose(ds.y_obs, direction.eta)


class TestUpdateInterval:
    def test_trivial_graph_whole_line(self, rng):
        ds = make_dataset(rng, 10, 3, miss_prob=0.0)
        graph = mvi_only_graph()
        res = update_interval(graph, ds, ds.y_obs.copy(), np.ones(10) / 10,
                              0.0)
        assert res.interval == Interval(-math.inf, math.inf)
        assert res.features == (0, 1, 2) and res.outliers == ()
        assert res.completed

    def test_matches_forward_run_at_observed_statistic(self, rng):
        ds = make_dataset(rng, 60, 10)
        graph = option1()
        out, direction, line = observed_line(graph, ds)
        res = update_interval(graph, ds, line.a, line.b, direction.z_obs)
        assert res.features == out.features
        assert res.outliers == out.outliers
        assert res.interval.contains(direction.z_obs)

    def test_outcome_changes_past_a_boundary(self, rng):
        for seed in range(10):
            local = np.random.default_rng(seed)
            ds = make_dataset(local, 50, 8)
            graph = option1()
            out, direction, line = observed_line(graph, ds)
            res = update_interval(graph, ds, line.a, line.b, direction.z_obs)
            if not math.isfinite(res.interval.hi):
                continue
            beyond = update_interval(graph, ds, line.a, line.b,
                                     res.interval.hi + 1e-3)
            assert (beyond.features, beyond.outliers) != \
                (res.features, res.outliers)
            return
        pytest.skip("no finite boundary found in ten seeds")

    def test_constancy_inside_returned_interval(self):
        # the interval's defining property: re-running anywhere inside it
        # gives the identical triple
        for seed in range(8):
            graph, ds = random_runnable_instance(seed + 100)
            out, direction, line = observed_line(graph, ds)
            ctx = SearchContext(graph, ds, line.a, line.b)
            res = update_interval(graph, ds, line.a, line.b,
                                  direction.z_obs, ctx)
            lo = max(res.interval.lo, direction.z_obs - 20)
            hi = min(res.interval.hi, direction.z_obs + 20)
            rng = np.random.default_rng(seed)
            for r in rng.uniform(lo, hi, size=10):
                again = update_interval(graph, ds, line.a, line.b, float(r),
                                        SearchContext(graph, ds, line.a,
                                                      line.b))
                assert again.features == res.features
                assert again.outliers == res.outliers
                assert again.interval.lo == pytest.approx(res.interval.lo,
                                                          abs=1e-7)
                assert again.interval.hi == pytest.approx(res.interval.hi,
                                                          abs=1e-7)


class TestLineSearch:
    def test_data_independent_pipeline_covers_window(self, rng):
        ds = make_dataset(rng, 10, 3, miss_prob=0.0)
        graph = mvi_only_graph()
        window = Interval(-4.0, 4.0)
        Z, count = line_search_truncation(
            graph, ds, ds.y_obs.copy(), np.ones(10) / 10,
            ((0, 1, 2), ()), window,
        )
        assert Z.to_pairs() == [(-4.0, 4.0)]
        assert count == 1

    def test_two_column_marginal_geometry_covers_whole_window(self):
        # scores |r| vs |r/2|: the same feature wins everywhere, so the
        # truncation set is the entire window (grid-scan ground truth)
        X = np.eye(2)
        ds = make_dataset_like(X)
        graph = PipelineGraph(
            [Node(0, "source"), Node(1, "fs", "marginal", 1),
             Node(2, "sink")],
            [(0, 1), (1, 2)],
        )
        a = np.zeros(2)
        b = np.array([1.0, 0.5])
        window = Interval(-5.0, 5.0)
        Z, _ = line_search_truncation(graph, ds, a, b, ((0,), ()), window)
        for r in np.linspace(-5, 5, 101):
            fwd = run_pipeline(graph, ds.with_y_obs(a + b * r))
            assert (fwd.features == (0,)) == Z.contains(float(r), 1e-9)
        assert Z.contains(-4.9) and Z.contains(4.9)

    def test_observed_statistic_always_covered(self):
        for seed in range(10):
            graph, ds = random_runnable_instance(seed + 300)
            out, direction, line = observed_line(graph, ds)
            window = search_window(direction.z_obs, direction.sigma_T)
            Z, _ = line_search_truncation(
                graph, ds, line.a, line.b, (out.features, out.outliers),
                window,
            )
            assert Z.contains(direction.z_obs, 1e-9), f"seed {seed}"

    def test_segments_tile_the_window(self, rng):
        ds = make_dataset(rng, 50, 8)
        graph = option1()
        out, direction, line = observed_line(graph, ds)
        window = search_window(direction.z_obs, direction.sigma_T)
        ctx = SearchContext(graph, ds, line.a, line.b)
        segments = []
        pos = window.lo
        guard = 0
        while pos <= window.hi and guard < 10000:
            guard += 1
            res = update_interval(graph, ds, line.a, line.b, pos, ctx)
            segments.append(res.interval)
            if res.interval.hi >= window.hi:
                break
            pos = res.interval.hi + max(1e-10, 1e-10 * abs(res.interval.hi))
        for prev, nxt in zip(segments, segments[1:]):
            assert nxt.lo <= prev.hi + 1e-8  # no gaps beyond the step

    def test_single_segment_subset_of_truncation(self, rng):
        ds = make_dataset(rng, 60, 10)
        graph = option1()
        out, direction, line = observed_line(graph, ds)
        window = search_window(direction.z_obs, direction.sigma_T)
        ctx = SearchContext(graph, ds, line.a, line.b)
        Z, _ = line_search_truncation(
            graph, ds, line.a, line.b, (out.features, out.outliers), window,
            ctx,
        )
        oc = update_interval(graph, ds, line.a, line.b, direction.z_obs, ctx)
        clipped = oc.interval.clip_to(window.lo, window.hi)
        for r in np.linspace(clipped.lo, clipped.hi, 25):
            assert Z.contains(float(r), 1e-9)


def make_dataset_like(X):
    from selpipe.data import MaskedDataset

    n = X.shape[0]
    return MaskedDataset(X=np.asarray(X, dtype=float), y_obs=np.zeros(n),
                         miss_mask=np.zeros(n, dtype=bool))
