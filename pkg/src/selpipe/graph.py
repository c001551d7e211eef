"""Declarative pipeline graphs: typed nodes, validation, topological order,
and the JSON config format.

A pipeline is a DAG with a unique ``source`` and ``sink``.  Interior nodes
impute missing responses (``mvi``), detect outliers (``od``), select features
(``fs``), merge parallel branches (``combine_features`` / ``combine_outliers``),
or merely re-scope downstream computations (``extract_features`` /
``remove_outliers``, which carry no selection event).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from heapq import heappop, heappush
from pathlib import Path

from .exceptions import CycleError, PlacementError, SchemaError

SOURCE = "source"
SINK = "sink"
MVI = "mvi"
OD = "od"
FS = "fs"
EXTRACT_FEATURES = "extract_features"
REMOVE_OUTLIERS = "remove_outliers"
COMBINE_FEATURES = "combine_features"
COMBINE_OUTLIERS = "combine_outliers"

KINDS = frozenset({
    SOURCE, SINK, MVI, OD, FS, EXTRACT_FEATURES, REMOVE_OUTLIERS,
    COMBINE_FEATURES, COMBINE_OUTLIERS,
})
COMBINE_KINDS = frozenset({COMBINE_FEATURES, COMBINE_OUTLIERS})
PASSTHROUGH_KINDS = frozenset({EXTRACT_FEATURES, REMOVE_OUTLIERS, SINK})

MVI_METHODS = frozenset({"mean", "knn", "regression"})
OD_METHODS = frozenset({"cook", "dffits", "soft_ipod"})
FS_METHODS = frozenset({"marginal", "stepwise", "lasso"})
COMBINE_METHODS = frozenset({"union", "intersection"})

_INT_PARAM_METHODS = frozenset({"marginal", "stepwise"})


@dataclass(frozen=True, slots=True)
class Node:
    """One typed pipeline operation."""

    id: int
    kind: str
    method: str | None = None
    param: float | int | None = None

    def label(self) -> str:
        bits = [self.kind]
        if self.method:
            bits.append(self.method)
        if self.param is not None:
            bits.append(str(self.param))
        return f"#{self.id}:" + "/".join(bits)


def _validate_node(node: Node) -> Node:
    kind, method, param = node.kind, node.method, node.param
    if kind not in KINDS:
        raise SchemaError(f"unknown node kind {kind!r} (node {node.id})")
    if kind == MVI:
        if method not in MVI_METHODS:
            raise SchemaError(f"unknown imputation method {method!r} (node {node.id})")
        if param is not None:
            raise SchemaError(f"imputation nodes take no param (node {node.id})")
    elif kind == OD:
        if method not in OD_METHODS:
            raise SchemaError(f"unknown outlier method {method!r} (node {node.id})")
        if param is None or not param > 0:
            raise SchemaError(
                f"outlier node {node.id} needs a positive threshold, got {param!r}"
            )
    elif kind == FS:
        if method not in FS_METHODS:
            raise SchemaError(f"unknown selection method {method!r} (node {node.id})")
        if method in _INT_PARAM_METHODS:
            if param is None or float(param) != int(param) or int(param) < 1:
                raise SchemaError(
                    f"{method} node {node.id} needs an integer count >= 1, "
                    f"got {param!r}"
                )
            node = Node(node.id, kind, method, int(param))
        else:
            if param is None or not param > 0:
                raise SchemaError(
                    f"lasso node {node.id} needs a positive penalty, got {param!r}"
                )
    elif kind in COMBINE_KINDS:
        if method not in COMBINE_METHODS:
            raise SchemaError(f"unknown combine op {method!r} (node {node.id})")
        if param is not None:
            raise SchemaError(f"combine nodes take no param (node {node.id})")
    else:
        if method is not None or param is not None:
            raise SchemaError(
                f"{kind} nodes take no method/param (node {node.id})"
            )
    return node


class PipelineGraph:
    """Validated pipeline DAG.  Immutable after construction."""

    __slots__ = ("nodes", "edges", "parents", "children", "source_id",
                 "sink_id", "_order")

    def __init__(self, nodes: list[Node], edges: list[tuple[int, int]]):
        ids = [node.id for node in nodes]
        if sorted(ids) != list(range(len(nodes))):
            raise SchemaError(
                f"node ids must be dense integers 0..{len(nodes) - 1}, got {ids}"
            )
        if ids != list(range(len(nodes))):
            raise SchemaError("nodes must be listed in id order")
        self.nodes: tuple[Node, ...] = tuple(_validate_node(n) for n in nodes)

        n = len(nodes)
        seen = set()
        parents: list[list[int]] = [[] for _ in range(n)]
        children: list[list[int]] = [[] for _ in range(n)]
        for edge in edges:
            try:
                u, v = int(edge[0]), int(edge[1])
            except (TypeError, ValueError, IndexError):
                raise SchemaError(f"edge {edge!r} is not a pair of node ids") from None
            if not (0 <= u < n and 0 <= v < n):
                raise SchemaError(f"edge ({u}, {v}) references unknown node")
            if u == v:
                raise CycleError(f"self-loop at node {u}")
            if (u, v) in seen:
                raise SchemaError(f"duplicate edge ({u}, {v})")
            seen.add((u, v))
            parents[v].append(u)
            children[u].append(v)
        self.edges: tuple[tuple[int, int], ...] = tuple(sorted(seen))
        self.parents = tuple(tuple(sorted(p)) for p in parents)
        self.children = tuple(tuple(sorted(c)) for c in children)

        sources = [x.id for x in self.nodes if x.kind == SOURCE]
        sinks = [x.id for x in self.nodes if x.kind == SINK]
        if len(sources) != 1 or len(sinks) != 1:
            raise SchemaError(
                f"need exactly one source and one sink, got {len(sources)} "
                f"source(s) and {len(sinks)} sink(s)"
            )
        self.source_id, self.sink_id = sources[0], sinks[0]

        self._order = self._toposort()
        self._check_structure()

    def _toposort(self) -> tuple[int, ...]:
        indeg = [len(p) for p in self.parents]
        heap = [i for i, deg in enumerate(indeg) if deg == 0]
        heap.sort()
        order: list[int] = []
        while heap:
            u = heappop(heap)
            order.append(u)
            for v in self.children[u]:
                indeg[v] -= 1
                if indeg[v] == 0:
                    heappush(heap, v)
        if len(order) < len(self.nodes):
            raise CycleError(f"cycle through edge {self._find_back_edge()}")
        return tuple(order)

    def _find_back_edge(self) -> tuple[int, int]:
        color = [0] * len(self.nodes)  # 0 unseen, 1 on stack, 2 done

        def dfs(u: int) -> tuple[int, int] | None:
            color[u] = 1
            for v in self.children[u]:
                if color[v] == 1:
                    return (u, v)
                if color[v] == 0:
                    hit = dfs(v)
                    if hit:
                        return hit
            color[u] = 2
            return None

        for start in range(len(self.nodes)):
            if color[start] == 0:
                hit = dfs(start)
                if hit:
                    return hit
        raise AssertionError("no back edge found despite cycle")

    def _check_structure(self) -> None:
        for node in self.nodes:
            deg = len(self.parents[node.id])
            if node.kind == SOURCE:
                if deg != 0:
                    raise SchemaError(f"source node {node.id} has incoming edges")
            elif node.kind in COMBINE_KINDS:
                if deg < 2:
                    raise SchemaError(
                        f"combine node {node.id} needs at least 2 inputs, has {deg}"
                    )
            elif deg != 1:
                raise SchemaError(
                    f"node {node.label()} must have exactly one input, has {deg}"
                )

        reach = self._closure(self.source_id, self.children)
        coreach = self._closure(self.sink_id, self.parents)
        for node in self.nodes:
            if node.id not in reach:
                raise SchemaError(f"node {node.label()} unreachable from source")
            if node.id not in coreach:
                raise SchemaError(f"node {node.label()} cannot reach sink")

        mvi_nodes = [x for x in self.nodes if x.kind == MVI]
        if len(mvi_nodes) > 1:
            raise PlacementError(
                f"at most one imputation node allowed, found "
                f"{[x.id for x in mvi_nodes]}"
            )
        if mvi_nodes:
            mvi = mvi_nodes[0]
            if self.parents[mvi.id] != (self.source_id,):
                raise PlacementError(
                    f"imputation node {mvi.id} must directly follow the source"
                )
            if self.children[self.source_id] != (mvi.id,):
                raise PlacementError(
                    "every path must start with the imputation node; source "
                    f"also feeds {self.children[self.source_id]}"
                )

    @staticmethod
    def _closure(start: int, adjacency) -> set[int]:
        seen = {start}
        stack = [start]
        while stack:
            u = stack.pop()
            for v in adjacency[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return seen

    # -- public API ---------------------------------------------------------

    @property
    def mvi_node(self) -> Node | None:
        for node in self.nodes:
            if node.kind == MVI:
                return node
        return None

    def topological_order(self) -> tuple[int, ...]:
        """Node ids, every edge going forward; ties broken by ascending id."""
        return self._order

    def to_config(self) -> dict:
        nodes = []
        for node in self.nodes:
            entry: dict = {"id": node.id, "kind": node.kind}
            if node.method is not None:
                entry["method"] = node.method
            if node.param is not None:
                entry["param"] = node.param
            nodes.append(entry)
        return {"nodes": nodes, "edges": [list(e) for e in self.edges]}

    def to_json(self) -> str:
        return json.dumps(self.to_config())

    def __eq__(self, other: object) -> bool:
        return (isinstance(other, PipelineGraph)
                and self.nodes == other.nodes and self.edges == other.edges)

    def __hash__(self) -> int:
        return hash((self.nodes, self.edges))

    def __repr__(self) -> str:
        return (f"PipelineGraph({len(self.nodes)} nodes, "
                f"{len(self.edges)} edges)")


def parse_pipeline(config: dict | str) -> PipelineGraph:
    """Build and validate a :class:`PipelineGraph` from a config dict or JSON
    text."""
    if isinstance(config, str):
        try:
            config = json.loads(config)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"config is not valid JSON: {exc}") from None
    if not isinstance(config, dict):
        raise SchemaError(f"config must be an object, got {type(config).__name__}")
    for key in ("nodes", "edges"):
        if key not in config:
            raise SchemaError(f"config is missing the {key!r} list")
    nodes = []
    for entry in config["nodes"]:
        if not isinstance(entry, dict) or "id" not in entry or "kind" not in entry:
            raise SchemaError(f"node entry {entry!r} needs 'id' and 'kind'")
        unknown = set(entry) - {"id", "kind", "method", "param"}
        if unknown:
            raise SchemaError(f"node {entry.get('id')}: unknown keys {sorted(unknown)}")
        nodes.append(Node(
            id=int(entry["id"]),
            kind=str(entry["kind"]),
            method=entry.get("method"),
            param=entry.get("param"),
        ))
    return PipelineGraph(nodes, config["edges"])


def load_pipeline(path: str | Path) -> PipelineGraph:
    return parse_pipeline(Path(path).read_text(encoding="utf-8"))


def topological_order(graph: PipelineGraph) -> tuple[int, ...]:
    return graph.topological_order()
