from __future__ import annotations

import numpy as np
import pytest

from selpipe.components import run_pipeline
from selpipe.data import MaskedDataset
from selpipe.graph import Node, PipelineGraph


def make_dataset(rng, n, d, miss_prob=0.03, beta=None) -> MaskedDataset:
    X = rng.standard_normal((n, d))
    y = rng.standard_normal(n)
    if beta is not None:
        y = y + X @ np.asarray(beta, dtype=float)
    miss = rng.random(n) < miss_prob
    if miss.all():
        miss[:] = False
    return MaskedDataset(X=X, y_obs=y[~miss], miss_mask=miss)


def random_graph(rng, d: int) -> PipelineGraph:
    """A random valid pipeline: imputation first, then 1-3 stages of
    detectors/selectors, possibly ending in a parallel selector branch."""
    nodes = [Node(0, "source"),
             Node(1, "mvi", str(rng.choice(["mean", "knn", "regression"])))]
    edges = [(0, 1)]
    last = 1

    def add(kind, method, param):
        nonlocal last
        nid = len(nodes)
        nodes.append(Node(nid, kind, method, param))
        edges.append((last, nid))
        last = nid

    def random_od():
        method = str(rng.choice(["cook", "dffits", "soft_ipod"]))
        lam = (float(rng.uniform(0.02, 0.08)) if method == "soft_ipod"
               else float(rng.uniform(2.0, 6.0)))
        return method, lam

    def random_fs(max_k):
        method = str(rng.choice(["marginal", "stepwise", "lasso"]))
        if method == "lasso":
            return method, float(rng.uniform(0.05, 0.2))
        return method, int(rng.integers(1, max_k + 1))

    remaining = d
    for _ in range(int(rng.integers(1, 3))):
        if rng.random() < 0.5:
            add("od", *random_od())
        else:
            method, param = random_fs(max(1, remaining - 1))
            add("fs", method, param)
            if method != "lasso":
                remaining = min(remaining, param)
    if rng.random() < 0.6:
        fork = last
        branch_ids = []
        for _ in range(2):
            method, param = random_fs(max(1, remaining - 1))
            nid = len(nodes)
            nodes.append(Node(nid, "fs", method, param))
            edges.append((fork, nid))
            branch_ids.append(nid)
        combine = len(nodes)
        nodes.append(Node(combine, "combine_features",
                          str(rng.choice(["union", "intersection"]))))
        edges.extend((b, combine) for b in branch_ids)
        last = combine
    sink = len(nodes)
    nodes.append(Node(sink, "sink"))
    edges.append((last, sink))
    return PipelineGraph(nodes, edges)


def random_runnable_instance(seed: int, n_max=40, d_max=6, tries=20):
    """(graph, dataset) pair on which the forward pipeline runs and selects
    at least one feature."""
    rng = np.random.default_rng(seed)
    for _ in range(tries):
        n = int(rng.integers(25, n_max + 1))
        d = int(rng.integers(3, d_max + 1))
        graph = random_graph(rng, d)
        dataset = make_dataset(rng, n, d)
        try:
            out = run_pipeline(graph, dataset)
        except Exception:
            continue
        if out.features and len(out.outliers) < n // 2:
            return graph, dataset
    raise RuntimeError(f"no runnable instance for seed {seed}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
