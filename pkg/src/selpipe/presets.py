"""Ready-made pipeline configurations used by the experiments and tests."""

from __future__ import annotations

from itertools import product

from .graph import Node, PipelineGraph


def _chain_with_branch(head: list[Node], branch: list[Node],
                       combine: Node) -> PipelineGraph:
    """Linear head, then parallel branch nodes merged by the combine node and
    fed to a sink."""
    nodes = [*head, *branch, combine]
    sink = Node(len(nodes), "sink")
    nodes.append(sink)
    edges = [(i, i + 1) for i in range(len(head) - 1)]
    last_head = head[-1].id
    for b in branch:
        edges.append((last_head, b.id))
        edges.append((b.id, combine.id))
    edges.append((combine.id, sink.id))
    return PipelineGraph(nodes, edges)


def option1(
    ipod: float = 0.02,
    screen: int = 5,
    stepwise: int = 3,
    lasso: float = 0.08,
) -> PipelineGraph:
    """Mean imputation, L1-regression outlier detection, marginal screening,
    then the union of stepwise and lasso selections."""
    head = [
        Node(0, "source"),
        Node(1, "mvi", "mean"),
        Node(2, "od", "soft_ipod", ipod),
        Node(3, "fs", "marginal", screen),
    ]
    branch = [
        Node(4, "fs", "stepwise", stepwise),
        Node(5, "fs", "lasso", lasso),
    ]
    return _chain_with_branch(head, branch, Node(6, "combine_features", "union"))


def option2(
    screen: int = 5,
    cook: float = 3.0,
    stepwise: int = 3,
    lasso: float = 0.08,
) -> PipelineGraph:
    """Regression imputation, marginal screening, Cook's-distance outlier
    detection, then the intersection of stepwise and lasso selections."""
    head = [
        Node(0, "source"),
        Node(1, "mvi", "regression"),
        Node(2, "fs", "marginal", screen),
        Node(3, "od", "cook", cook),
    ]
    branch = [
        Node(4, "fs", "stepwise", stepwise),
        Node(5, "fs", "lasso", lasso),
    ]
    return _chain_with_branch(head, branch,
                              Node(6, "combine_features", "intersection"))


def option1_grid(
    ipod=(0.02, 0.018),
    screen=(3, 5),
    stepwise=(2, 3),
    lasso=(0.08, 0.12),
) -> list[PipelineGraph]:
    return [option1(i, m, s, l)
            for i, m, s, l in product(ipod, screen, stepwise, lasso)]


def option2_grid(
    screen=(3, 5),
    cook=(2.0, 3.0),
    stepwise=(2, 3),
    lasso=(0.08, 0.12),
) -> list[PipelineGraph]:
    return [option2(m, c, s, l)
            for m, c, s, l in product(screen, cook, stepwise, lasso)]


def candidate_grid(size: int = 32) -> list[PipelineGraph]:
    """Candidate sets for cross-validated pipeline selection.

    ``size=32`` sweeps both shapes over two values of every knob; ``size=8``
    is the reduced set (two knobs per shape swept, the rest at defaults).
    """
    if size == 32:
        return option1_grid() + option2_grid()
    if size == 8:
        return (option1_grid(ipod=(0.02, 0.018), screen=(3, 5),
                             stepwise=(3,), lasso=(0.08,))
                + option2_grid(screen=(3, 5), cook=(2.0, 3.0),
                               stepwise=(3,), lasso=(0.08,)))
    raise ValueError(f"no preset candidate grid of size {size}")
