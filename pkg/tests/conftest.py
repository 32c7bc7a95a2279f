import math
from pathlib import Path

import numpy as np
import pytest

from riskprune.ast_model import AnnotatedAst, AstNode, parse_ast_json

DATA_DIR = Path(__file__).parent / "data"


def build_ast(task_id: str, spec) -> AnnotatedAst:
    """Build a tree from nested (label, weight, [children...]) tuples.

    Ids are assigned in preorder, root first, so fixtures in tests read
    top-down in the same order as their serialized form.
    """
    nodes: list[AstNode] = []

    def walk(entry) -> int:
        label, weight, children = entry
        node_id = len(nodes)
        nodes.append(None)  # reserve the preorder slot
        child_ids = [walk(c) for c in children]
        nodes[node_id] = AstNode(
            id=node_id, label=label, children=tuple(child_ids), weight=float(weight)
        )
        return node_id

    walk(spec)
    return AnnotatedAst(task_id=task_id, root_id=0, nodes=tuple(nodes))


def random_ast(rng: np.random.Generator, n_max: int = 12, task_id: str = "rand") -> AnnotatedAst:
    """Random recursive tree with uniform weights, for oracle-style sweeps."""
    n = int(rng.integers(1, n_max + 1))
    children: list[list[int]] = [[] for _ in range(n)]
    for v in range(1, n):
        children[int(rng.integers(0, v))].append(v)
    nodes = tuple(
        AstNode(
            id=v,
            label=f"op{int(rng.integers(0, 5))}",
            children=tuple(children[v]),
            weight=float(rng.uniform(0.01, 1.0)),
        )
        for v in range(n)
    )
    return AnnotatedAst(task_id=task_id, root_id=0, nodes=nodes)


@pytest.fixture()
def tiny() -> AnnotatedAst:
    return parse_ast_json((DATA_DIR / "tiny.json").read_text())


@pytest.fixture()
def tiny_bytes() -> str:
    return (DATA_DIR / "tiny.json").read_text()


def assert_close(actual: float, expected: float, tol: float) -> None:
    assert math.isfinite(actual)
    assert abs(actual - expected) <= tol, f"{actual} not within {tol} of {expected}"
