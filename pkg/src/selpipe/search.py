"""Threading selection events through the pipeline DAG and sweeping the
test-statistic axis.

:func:`update_interval` applies per-node update rules in topological order:
imputation maps the response line, detectors/selectors tighten the current
constancy interval with their event intervals, and combine nodes merge
branch states.  :func:`line_search_truncation` tiles a window with such
intervals and keeps those whose outcome matches the observed selection,
yielding the truncation set of the conditional null distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .components import ImputationMap, build_imputation_map, combine_sets
from .data import MaskedDataset
from .events import EventResult, ParamLine, fs_event, od_event
from .exceptions import (
    BranchConsistencyError,
    DegreesOfFreedomError,
    EmptySelectionError,
    LeverageError,
    NormalizationError,
    PipelineConfigError,
    RankError,
    SearchStallError,
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
from .intervals import Interval, IntervalSet

# Events on a degenerate sub-frame (no usable rows/columns/rank) end the
# walk early; the line search records the segment as non-matching.
DEGENERATE_ERRORS = (
    DegreesOfFreedomError,
    EmptySelectionError,
    LeverageError,
    NormalizationError,
    RankError,
)

MAX_SEGMENTS = 100_000
_BASE_STEP = 1e-10


@dataclass(frozen=True)
class NodeState:
    """Per-node payload while walking the DAG at a fixed ``z``: the current
    response line, selection state, and constancy interval ``[lo, hi]``."""

    a: np.ndarray
    b: np.ndarray
    features: tuple[int, ...]
    outliers: tuple[int, ...]
    lo: float
    hi: float
    truncated: bool = False


@dataclass(frozen=True)
class UpdateResult:
    """Sink state of one walk: constancy interval and the selection made."""

    interval: Interval
    features: tuple[int, ...]
    outliers: tuple[int, ...]
    completed: bool

    @property
    def outcome(self) -> tuple:
        return (self.features, self.outliers, self.completed)


class SearchContext:
    """Caches shared by all walks of one line search (fixed graph, dataset,
    and response line)."""

    def __init__(self, graph: PipelineGraph, dataset: MaskedDataset,
                 a: np.ndarray, b: np.ndarray):
        if a.shape != (dataset.n_obs,) or b.shape != (dataset.n_obs,):
            raise ValueError(
                f"a and b must have length n_obs={dataset.n_obs}"
            )
        self.graph = graph
        self.dataset = dataset
        self.obs_line = ParamLine(a, b)
        mvi = graph.mvi_node
        if mvi is None:
            if dataset.n_obs != dataset.n:
                raise PipelineConfigError(
                    "dataset has missing responses but the pipeline has no "
                    "imputation node"
                )
            self.imputation: ImputationMap | None = None
            self.imputed_line = self.obs_line
        else:
            self.imputation = build_imputation_map(
                mvi.method, dataset.X, dataset.miss_mask
            )
            self.imputed_line = ParamLine(
                self.imputation.apply(a), self.imputation.apply(b)
            )
        self._workspaces: dict = {}

    def workspace(self, node_id: int, rows: np.ndarray,
                  cols: np.ndarray) -> dict:
        key = (node_id, rows.tobytes(), cols.tobytes())
        ws = self._workspaces.get(key)
        if ws is None:
            ws = {}
            self._workspaces[key] = ws
        return ws


def apply_update_rule(node, inputs: list[NodeState], z: float,
                      context: SearchContext) -> NodeState:
    """Update rule for a single node.

    Imputation maps ``(a, b)`` to the full frame; detectors/selectors run
    their event on the current sub-frame, merge the local result into global
    indices, and tighten ``[lo, hi]``; combine nodes merge branch feature or
    outlier sets and intersect branch intervals; re-scoping nodes pass state
    through unchanged.
    """
    kind = node.kind
    if kind == MVI:
        (state,) = inputs
        line = context.imputed_line
        return NodeState(line.a, line.b, state.features, state.outliers,
                         state.lo, state.hi, state.truncated)

    if kind in (OD, FS):
        (state,) = inputs
        if state.truncated:
            return state
        n = context.dataset.n
        rows = np.setdiff1d(np.arange(n), np.asarray(state.outliers, int))
        cols = np.asarray(state.features, dtype=int)
        if rows.size == 0 or cols.size == 0:
            return _truncate(state)
        ws = context.workspace(node.id, rows, cols)
        if "frame" not in ws:
            ws["frame"] = (
                context.dataset.X[np.ix_(rows, cols)],
                ParamLine(state.a[rows], state.b[rows]),
            )
        X_sub, line_sub = ws["frame"]
        try:
            if kind == FS:
                ev: EventResult = fs_event(node.method, X_sub, line_sub, z,
                                           node.param, workspace=ws)
            else:
                ev = od_event(node.method, X_sub, line_sub, z, node.param,
                              workspace=ws)
        except DEGENERATE_ERRORS:
            return _truncate(state)
        lo = max(state.lo, ev.interval.lo)
        hi = min(state.hi, ev.interval.hi)
        if kind == FS:
            feats = tuple(int(cols[j]) for j in ev.selection)
            return NodeState(state.a, state.b, feats, state.outliers, lo, hi)
        new_out = state.outliers
        if ev.selection:
            new_out = combine_sets("union", [
                state.outliers, tuple(int(rows[i]) for i in ev.selection)
            ])
        return NodeState(state.a, state.b, state.features, new_out, lo, hi)

    if kind in (COMBINE_FEATURES, COMBINE_OUTLIERS):
        first = inputs[0]
        if any(s.a is not first.a or s.b is not first.b for s in inputs):
            raise BranchConsistencyError(
                f"branches into {node.label()} carry different response lines"
            )
        lo = max(s.lo for s in inputs)
        hi = min(s.hi for s in inputs)
        if any(s.truncated for s in inputs):
            return NodeState(first.a, first.b, first.features, first.outliers,
                             lo, hi, truncated=True)
        if kind == COMBINE_FEATURES:
            if any(s.outliers != first.outliers for s in inputs):
                raise BranchConsistencyError(
                    f"branches into {node.label()} disagree on outliers"
                )
            feats = combine_sets(node.method, [s.features for s in inputs])
            return NodeState(first.a, first.b, feats, first.outliers, lo, hi)
        if any(s.features != first.features for s in inputs):
            raise BranchConsistencyError(
                f"branches into {node.label()} disagree on features"
            )
        outs = combine_sets(node.method, [s.outliers for s in inputs])
        return NodeState(first.a, first.b, first.features, outs, lo, hi)

    # sink / extract_features / remove_outliers
    (state,) = inputs
    return state


def _truncate(state: NodeState) -> NodeState:
    return NodeState(state.a, state.b, state.features, state.outliers,
                     state.lo, state.hi, truncated=True)


def update_interval(graph: PipelineGraph, dataset: MaskedDataset,
                    a: np.ndarray, b: np.ndarray, z: float,
                    context: SearchContext | None = None) -> UpdateResult:
    """Walk the DAG at ``z``: returns the sink's constancy interval and the
    selection made at ``a + b*z``.

    Re-running at any ``r`` inside the returned interval reproduces the same
    result, which is what makes the line search sound.
    """
    if context is None:
        context = SearchContext(graph, dataset, a, b)
    states: dict[int, NodeState] = {}
    d = dataset.d
    for nid in graph.topological_order():
        node = graph.nodes[nid]
        if node.kind == SOURCE:
            states[nid] = NodeState(context.obs_line.a, context.obs_line.b,
                                    tuple(range(d)), (), -math.inf, math.inf)
            continue
        inputs = [states[p] for p in graph.parents[nid]]
        states[nid] = apply_update_rule(node, inputs, z, context)
    final = states[graph.sink_id]
    return UpdateResult(
        interval=Interval(min(final.lo, z), max(final.hi, z)),
        features=final.features,
        outliers=final.outliers,
        completed=not final.truncated,
    )


def _advance_step(at: float) -> float:
    return max(_BASE_STEP, _BASE_STEP * abs(at))


def line_search_truncation(
    graph: PipelineGraph,
    dataset: MaskedDataset,
    a: np.ndarray,
    b: np.ndarray,
    target: tuple[tuple[int, ...], tuple[int, ...]],
    window: Interval,
    context: SearchContext | None = None,
    max_segments: int = MAX_SEGMENTS,
) -> tuple[IntervalSet, int]:
    """Sweep ``window`` and union the constancy intervals whose outcome equals
    ``target = (features, outliers)``.

    Returns the truncation set (clipped to the window) and the number of
    segments visited.
    """
    if not (math.isfinite(window.lo) and math.isfinite(window.hi)):
        raise ValueError("search window must be finite")
    if context is None:
        context = SearchContext(graph, dataset, a, b)
    feats, outs = target

    def update(z):
        return update_interval(graph, dataset, a, b, z, context)

    def matches(res: UpdateResult) -> bool:
        return res.completed and res.features == feats and res.outliers == outs

    return sweep_line(update, matches, window, max_segments)


def sweep_line(update, matches, window: Interval,
               max_segments: int = MAX_SEGMENTS) -> tuple[IntervalSet, int]:
    """Generic segment sweep used for both plain and cross-validated searches.

    ``update(z)`` must return an :class:`UpdateResult`-like object whose
    ``interval`` contains ``z`` and on which its outcome is constant;
    ``matches(result)`` says whether the segment belongs to the truncation
    set.
    """
    matched: list[Interval] = []
    pos = window.lo
    count = 0
    prev_pos = None
    while pos <= window.hi:
        count += 1
        if count > max_segments:
            raise SearchStallError(
                f"line search visited more than {max_segments} segments in "
                f"[{window.lo}, {window.hi}]"
            )
        res = update(pos)
        seg = res.interval
        if matches(res):
            clipped = seg.clip_to(window.lo, window.hi)
            if clipped is not None:
                matched.append(clipped)
        if seg.hi >= window.hi:
            break
        nxt = seg.hi + _advance_step(seg.hi)
        if nxt <= pos:
            if prev_pos == pos:
                raise SearchStallError(
                    f"line search stalled at z={pos} (zero-width segment)"
                )
            nxt = pos + _advance_step(pos)
        prev_pos = pos
        pos = nxt
    return IntervalSet(matched), count
