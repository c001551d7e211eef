"""Declare feature-selection pipelines by writing them as plain dataflow.

Each call takes dataset placeholders and returns new placeholders, building a
graph behind the scenes:

    X, y = initialize_dataset()
    y = mean_value_imputation(X, y)
    O = soft_ipod(X, y, 0.02)
    X, y = remove_outliers(X, y, O)
    M = marginal_screening(X, y, 5)
    X = extract_features(X, M)
    M = union(stepwise_feature_selection(X, y, 3), lasso(X, y, 0.08))
    manager = construct_pipelines(output=M)

Passing a list for any parameter declares one candidate pipeline per value
(cartesian across parameters); managers combine with ``|``.  ``tune`` picks a
candidate by cross-validation and ``inference`` computes selective p-values,
both by driving the engine's command-line interface.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

from .runtime import run_cv_inference, run_cv_selection, run_inference


class BuilderError(ValueError):
    """Ill-formed dataflow in a pipeline declaration."""


@dataclass(frozen=True)
class Placeholder:
    """Value flowing through a declared pipeline (matrix, response, feature
    set, or outlier set); ``node`` is the operation that produced it."""

    builder: "GraphBuilder"
    role: str  # "X" | "y" | "features" | "outliers"
    node: int


@dataclass
class _NodeDecl:
    kind: str
    method: str | None
    params: tuple | None  # candidate values; None for parameterless nodes
    edge_parents: tuple[int, ...]


@dataclass
class GraphBuilder:
    nodes: list[_NodeDecl] = field(default_factory=list)

    def add(self, kind: str, method: str | None, params,
            parents: Sequence[int], merge: bool = False) -> int:
        """Append an operation.  Ordinary nodes hang off the most recent of
        their inputs' producers (the dataflow frontier); merge nodes take an
        edge from every branch."""
        parents = tuple(sorted(set(parents)))
        if not parents:
            raise BuilderError(f"{kind} node has no upstream value")
        edge_parents = parents if merge else (parents[-1],)
        decl = _NodeDecl(kind=kind, method=method,
                         params=_as_candidates(params),
                         edge_parents=edge_parents)
        self.nodes.append(decl)
        return len(self.nodes) - 1

    def configs(self, output: int) -> list[dict]:
        """One engine config per combination of candidate parameter values.

        Node ids are dense and follow declaration order, with the source
        first and the sink last, matching the engine's serializer.
        """
        used = self._reachable(output)
        order = [i for i in range(len(self.nodes)) if i in used]
        ids = {decl_idx: pos + 1 for pos, decl_idx in enumerate(order)}
        sink_id = len(order) + 1

        spans = []
        for idx in order:
            params = self.nodes[idx].params
            spans.append(params if params is not None else (None,))
        configs = []
        for combo in itertools.product(*spans):
            nodes = [{"id": 0, "kind": "source"}]
            edges = []
            for pos, idx in enumerate(order):
                decl = self.nodes[idx]
                entry: dict = {"id": ids[idx], "kind": decl.kind}
                if decl.method is not None:
                    entry["method"] = decl.method
                if combo[pos] is not None:
                    entry["param"] = combo[pos]
                nodes.append(entry)
                for parent in decl.edge_parents:
                    src = 0 if parent == -1 else ids[parent]
                    edges.append([src, ids[idx]])
            nodes.append({"id": sink_id, "kind": "sink"})
            edges.append([ids[output], sink_id])
            edges.sort()
            configs.append({"nodes": nodes, "edges": edges})
        return configs

    def _reachable(self, output: int) -> set[int]:
        seen: set[int] = set()
        stack = [output]
        while stack:
            idx = stack.pop()
            if idx < 0 or idx in seen:
                continue
            seen.add(idx)
            stack.extend(self.nodes[idx].edge_parents)
        return seen


def _as_candidates(params):
    if params is None:
        return None
    if isinstance(params, (list, tuple)):
        if not params:
            raise BuilderError("parameter list must not be empty")
        return tuple(params)
    return (params,)


def initialize_dataset() -> tuple[Placeholder, Placeholder]:
    """Placeholders for the design matrix and the (possibly incomplete)
    response of a fresh pipeline."""
    builder = GraphBuilder()
    return (Placeholder(builder, "X", -1), Placeholder(builder, "y", -1))


def _common_builder(*values: Placeholder) -> GraphBuilder:
    if len({id(v.builder) for v in values}) != 1:
        raise BuilderError(
            "placeholders from different pipelines cannot be combined"
        )
    return values[0].builder


def _expect(value: Placeholder, role: str, fn: str) -> Placeholder:
    if not isinstance(value, Placeholder) or value.role != role:
        raise BuilderError(f"{fn} expects the pipeline's {role} placeholder")
    return value


def _imputation(method: str, X: Placeholder, y: Placeholder) -> Placeholder:
    builder = _common_builder(_expect(X, "X", method),
                              _expect(y, "y", method))
    node = builder.add("mvi", method, None, [X.node, y.node])
    return Placeholder(builder, "y", node)


def mean_value_imputation(X, y):
    """Fill missing responses with the mean of the observed ones."""
    return _imputation("mean", X, y)


def nearest_neighbor_imputation(X, y):
    """Fill each missing response from the closest observed row."""
    return _imputation("knn", X, y)


def definite_regression_imputation(X, y):
    """Fill missing responses with least squares predictions from the
    observed rows."""
    return _imputation("regression", X, y)


def _detector(method: str, X, y, threshold) -> Placeholder:
    builder = _common_builder(_expect(X, "X", method),
                              _expect(y, "y", method))
    node = builder.add("od", method, threshold, [X.node, y.node])
    return Placeholder(builder, "outliers", node)


def cook_distance(X, y, threshold):
    """Rows whose Cook's distance exceeds the threshold."""
    return _detector("cook", X, y, threshold)


def dffits(X, y, threshold):
    """Rows whose squared DFFITS exceeds the scaled threshold."""
    return _detector("dffits", X, y, threshold)


def soft_ipod(X, y, penalty):
    """Rows with a nonzero L1-penalized mean-shift term."""
    return _detector("soft_ipod", X, y, penalty)


def _selector(method: str, X, y, param) -> Placeholder:
    builder = _common_builder(_expect(X, "X", method),
                              _expect(y, "y", method))
    node = builder.add("fs", method, param, [X.node, y.node])
    return Placeholder(builder, "features", node)


def marginal_screening(X, y, count):
    """The ``count`` features most correlated with the response."""
    return _selector("marginal", X, y, count)


def stepwise_feature_selection(X, y, count):
    """Greedy forward selection of up to ``count`` features."""
    return _selector("stepwise", X, y, count)


def lasso(X, y, penalty):
    """Support of the L1-penalized regression coefficients."""
    return _selector("lasso", X, y, penalty)


def remove_outliers(X, y, outliers) -> tuple[Placeholder, Placeholder]:
    """Scope later steps to the rows the detector kept."""
    builder = _common_builder(X, y, _expect(outliers, "outliers",
                                            "remove_outliers"))
    return (Placeholder(builder, "X", outliers.node),
            Placeholder(builder, "y", outliers.node))


def extract_features(X, features) -> Placeholder:
    """Scope later steps to the selected feature columns."""
    builder = _common_builder(X, _expect(features, "features",
                                         "extract_features"))
    return Placeholder(builder, "X", features.node)


def _combine(op: str, *sets: Placeholder) -> Placeholder:
    if len(sets) < 2:
        raise BuilderError(f"{op} needs at least two sets")
    roles = {s.role for s in sets}
    if roles == {"features"}:
        kind = "combine_features"
    elif roles == {"outliers"}:
        kind = "combine_outliers"
    else:
        raise BuilderError(f"{op} cannot mix {sorted(roles)}")
    builder = _common_builder(*sets)
    node = builder.add(kind, op, None, [s.node for s in sets], merge=True)
    return Placeholder(builder, sets[0].role, node)


def union(*sets):
    """Union of feature sets (or of outlier sets) from parallel branches."""
    return _combine("union", *sets)


def intersection(*sets):
    """Intersection of feature sets (or outlier sets) from parallel
    branches."""
    return _combine("intersection", *sets)


class PipelineManager:
    """Candidate pipelines declared by one (or several) dataflows.

    A single-candidate manager runs plain selective inference; with several
    candidates, ``tune`` picks one by cross-validation and ``inference``
    conditions on that choice as well.
    """

    def __init__(self, configs: list[dict]):
        if not configs:
            raise BuilderError("manager needs at least one pipeline")
        self.configs = configs
        self.num_folds: int | None = None
        self.cv_seed = 0
        self.best_index_: int | None = None
        self.cv_errors_: list | None = None

    def __len__(self) -> int:
        return len(self.configs)

    def __or__(self, other: "PipelineManager") -> "PipelineManager":
        if not isinstance(other, PipelineManager):
            return NotImplemented
        return PipelineManager(self.configs + other.configs)

    def tune(self, X, y, num_folds: int = 2, seed: int = 0) -> int:
        """Pick the candidate with the lowest cross-validation error;
        returns its index."""
        self.num_folds = num_folds
        self.cv_seed = seed
        if len(self.configs) == 1:
            self.best_index_ = 0
            self.cv_errors_ = None
            return 0
        report = run_cv_selection(self.configs, X, y, num_folds, seed)
        self.best_index_ = int(report["selected_pipeline"])
        self.cv_errors_ = report["cv_errors"]
        return self.best_index_

    def inference(self, X, y, sigma: float | None = 1.0):
        """Selective p-values for the features the pipeline selects on
        ``(X, y)``; returns ``(selected features, p-values)``.

        Managers with several candidates must be tuned first; the reported
        p-values then account for the data-driven pipeline choice.
        """
        if len(self.configs) == 1:
            report = run_inference(self.configs[0], X, y, sigma)
        else:
            if self.num_folds is None:
                raise BuilderError(
                    "call tune(X, y, num_folds=...) before inference on a "
                    "multi-candidate manager"
                )
            report = run_cv_inference(self.configs, X, y, sigma,
                                      self.num_folds, self.cv_seed)
            self.best_index_ = int(report["selected_pipeline"])
        features = [entry["id"] for entry in report["features"]]
        p_values = [entry["p_selective"] for entry in report["features"]]
        self.last_report_ = report
        return features, p_values


def construct_pipelines(output: Placeholder) -> PipelineManager:
    """Close the declaration over its final feature set."""
    final = _expect(output, "features", "construct_pipelines")
    return PipelineManager(final.builder.configs(final.node))
