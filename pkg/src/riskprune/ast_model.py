"""Uncertainty-annotated abstract syntax trees.

An AnnotatedAst is a rooted, ordered, labeled tree whose nodes carry
nonnegative weights (negative log-probabilities, in nats). Trees are
immutable after validation and safe to share across workers. Node identity
across different trees is positional: two nodes match when their root-to-node
paths agree in both child index and label (see NodePath).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field


class AstParseError(ValueError):
    """Input does not conform to the AST JSON schema; message names the field."""


class AstValidationError(ValueError):
    """A structurally well-formed tree violates an invariant; message names the rule."""


@dataclass(frozen=True)
class AstNode:
    """One tree node: dense integer id, label, ordered child ids, weight in nats."""

    id: int
    label: str
    children: tuple[int, ...]
    weight: float


@dataclass(frozen=True)
class NodePath:
    """Cross-tree node identity: root label plus (child-index, label) steps.

    The root's path is the empty step sequence plus the root label. Two
    distinct nodes of one tree never share a NodePath because sibling
    positions differ.
    """

    root_label: str
    steps: tuple[tuple[int, str], ...]

    def key(self) -> tuple:
        return (self.root_label,) + self.steps


@dataclass(frozen=True)
class AnnotatedAst:
    """Validated weighted AST. nodes[i].id == i; root_id names the unique root."""

    task_id: str
    root_id: int
    nodes: tuple[AstNode, ...]
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        _validate(self)

    # -- basic accessors ---------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def node(self, node_id: int) -> AstNode:
        if not 0 <= node_id < len(self.nodes):
            raise AstValidationError(f"unknown node id {node_id}")
        return self.nodes[node_id]

    # -- derived structure (memoized; pure functions of the tree) ---------

    def _memo(self, key: str, build):
        cache = self._cache
        if key not in cache:
            cache[key] = build()
        return cache[key]

    def parents(self) -> tuple[int, ...]:
        """parent id per node; -1 for the root."""
        return self._memo("parents", lambda: _parents(self))[0]

    def child_positions(self) -> tuple[int, ...]:
        """index of each node within its parent's child list; 0 for the root."""
        return self._memo("parents", lambda: _parents(self))[1]

    def preorder(self) -> tuple[int, ...]:
        return self._memo("preorder", lambda: _preorder(self))

    def preorder_index(self) -> tuple[int, ...]:
        def build():
            order = self.preorder()
            idx = [0] * len(order)
            for pos, v in enumerate(order):
                idx[v] = pos
            return tuple(idx)

        return self._memo("preorder_index", build)

    def subtree_sizes(self) -> tuple[int, ...]:
        return self._memo("sizes", lambda: _subtree_aggregate(self, lambda n: 1))

    def subtree_weights(self) -> tuple[float, ...]:
        return self._memo("weights", lambda: _subtree_aggregate(self, lambda n: n.weight))

    def subtree_ids(self, node_id: int) -> tuple[int, ...]:
        """Node ids of subtree(node_id); a contiguous block of the preorder."""
        start = self.preorder_index()[node_id]
        return self.preorder()[start : start + self.subtree_sizes()[node_id]]

    def path_key_set(self) -> frozenset:
        return self._memo(
            "path_keys",
            lambda: frozenset(node_path(self, v).key() for v in range(self.n_nodes)),
        )


def _parents(ast: AnnotatedAst) -> tuple[tuple[int, ...], tuple[int, ...]]:
    parent = [-1] * ast.n_nodes
    child_pos = [0] * ast.n_nodes
    for node in ast.nodes:
        for pos, child in enumerate(node.children):
            parent[child] = node.id
            child_pos[child] = pos
    return tuple(parent), tuple(child_pos)


def _preorder(ast: AnnotatedAst) -> tuple[int, ...]:
    order: list[int] = []
    stack = [ast.root_id]
    while stack:
        v = stack.pop()
        order.append(v)
        # reversed so the leftmost child is visited first
        stack.extend(reversed(ast.nodes[v].children))
    return tuple(order)


def _subtree_aggregate(ast: AnnotatedAst, term) -> tuple:
    total = [term(n) for n in ast.nodes]
    for v in reversed(ast.preorder()):
        for c in ast.nodes[v].children:
            total[v] += total[c]
    return tuple(total)


def _validate(ast: AnnotatedAst) -> None:
    n = len(ast.nodes)
    if n == 0:
        raise AstValidationError("empty tree: at least one node required")
    for i, node in enumerate(ast.nodes):
        if node.id != i:
            raise AstValidationError(
                f"node ids must be dense 0..n-1: position {i} holds id {node.id}"
            )
        if not math.isfinite(node.weight):
            raise AstValidationError(f"non-finite weight at node {i}")
        if node.weight < 0:
            raise AstValidationError(f"negative weight at node {i}")
        seen: set[int] = set()
        for c in node.children:
            if not 0 <= c < n:
                raise AstValidationError(f"node {i} references missing child {c}")
            if c in seen:
                raise AstValidationError(f"node {i} repeats child {c}")
            seen.add(c)
    if not 0 <= ast.root_id < n:
        raise AstValidationError(f"root id {ast.root_id} out of range")

    indegree = [0] * n
    for node in ast.nodes:
        for c in node.children:
            indegree[c] += 1
    if indegree[ast.root_id] != 0:
        raise AstValidationError(f"root {ast.root_id} must have no parent")
    for v in range(n):
        if v != ast.root_id and indegree[v] != 1:
            rule = "no parent" if indegree[v] == 0 else "multiple parents"
            raise AstValidationError(f"non-root node {v} has {rule}")

    # one root + unique parents still admits disjoint cycles; require reachability
    visited = 0
    stack = [ast.root_id]
    seen_flags = [False] * n
    seen_flags[ast.root_id] = True
    while stack:
        v = stack.pop()
        visited += 1
        for c in ast.nodes[v].children:
            if not seen_flags[c]:
                seen_flags[c] = True
                stack.append(c)
    if visited != n:
        raise AstValidationError("tree is not connected: unreachable nodes present")


# -- schema IO -------------------------------------------------------------

_TOP_KEYS = {"task_id", "root", "nodes"}
_NODE_KEYS = {"id", "label", "children", "weight"}


def _expect_int(value, where: str) -> int:
    # bool is an int subclass; the schema means genuine integers
    if isinstance(value, bool) or not isinstance(value, int):
        raise AstParseError(f"{where}: expected integer, got {type(value).__name__}")
    return value


def parse_ast_json(data: bytes | str) -> AnnotatedAst:
    """Parse and validate the AST JSON schema.

    Schema (exact field names, unknown fields rejected):
    {"task_id": str, "root": int, "nodes": [{"id": int, "label": str,
    "children": [int], "weight": float}]}. Weights are preserved bit-exactly
    as 64-bit floats.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        obj = json.loads(data)
    except json.JSONDecodeError as exc:
        raise AstParseError(f"invalid JSON: {exc}") from exc
    return ast_from_obj(obj)


def ast_from_obj(obj) -> AnnotatedAst:
    """Build an AnnotatedAst from an already-decoded JSON object."""
    if not isinstance(obj, dict):
        raise AstParseError(f"top level: expected object, got {type(obj).__name__}")
    unknown = set(obj) - _TOP_KEYS
    if unknown:
        raise AstParseError(f"unknown top-level field {sorted(unknown)[0]!r}")
    missing = _TOP_KEYS - set(obj)
    if missing:
        raise AstParseError(f"missing top-level field {sorted(missing)[0]!r}")
    if not isinstance(obj["task_id"], str):
        raise AstParseError("task_id: expected string")
    root = _expect_int(obj["root"], "root")
    raw_nodes = obj["nodes"]
    if not isinstance(raw_nodes, list):
        raise AstParseError("nodes: expected array")

    slots: list[AstNode | None] = [None] * len(raw_nodes)
    for k, raw in enumerate(raw_nodes):
        where = f"nodes[{k}]"
        if not isinstance(raw, dict):
            raise AstParseError(f"{where}: expected object")
        unknown = set(raw) - _NODE_KEYS
        if unknown:
            raise AstParseError(f"{where}: unknown field {sorted(unknown)[0]!r}")
        missing = _NODE_KEYS - set(raw)
        if missing:
            raise AstParseError(f"{where}: missing field {sorted(missing)[0]!r}")
        node_id = _expect_int(raw["id"], f"{where}.id")
        if not isinstance(raw["label"], str):
            raise AstParseError(f"{where}.label: expected string")
        if not isinstance(raw["children"], list):
            raise AstParseError(f"{where}.children: expected array")
        children = tuple(
            _expect_int(c, f"{where}.children[{j}]") for j, c in enumerate(raw["children"])
        )
        weight = raw["weight"]
        if isinstance(weight, bool) or not isinstance(weight, (int, float)):
            raise AstParseError(f"{where}.weight: expected number")
        if not 0 <= node_id < len(raw_nodes):
            raise AstValidationError(
                f"node ids must be dense 0..n-1: found id {node_id} among {len(raw_nodes)} nodes"
            )
        if slots[node_id] is not None:
            raise AstValidationError(f"duplicate node id {node_id}")
        slots[node_id] = AstNode(node_id, raw["label"], children, float(weight))

    nodes = tuple(s for s in slots if s is not None)
    if len(nodes) != len(raw_nodes):
        raise AstValidationError("node ids must be dense 0..n-1")
    return AnnotatedAst(task_id=obj["task_id"], root_id=root, nodes=nodes)


def ast_to_obj(ast: AnnotatedAst) -> dict:
    return {
        "task_id": ast.task_id,
        "root": ast.root_id,
        "nodes": [
            {"id": n.id, "label": n.label, "children": list(n.children), "weight": n.weight}
            for n in ast.nodes
        ],
    }


def serialize_ast_json(ast: AnnotatedAst) -> str:
    """Inverse of parse_ast_json; float weights round-trip bit-exactly via repr."""
    return json.dumps(ast_to_obj(ast), separators=(",", ":"))


# -- operations ------------------------------------------------------------


def total_weight(ast: AnnotatedAst) -> float:
    """Sum of node weights, accumulated in id order."""
    return math.fsum(n.weight for n in ast.nodes)


def node_path(ast: AnnotatedAst, node_id: int) -> NodePath:
    """Root-to-node path of (child-index, label) steps; deterministic."""
    if not 0 <= node_id < ast.n_nodes:
        raise AstValidationError(f"unknown node id {node_id}")
    parents = ast.parents()
    positions = ast.child_positions()
    steps: list[tuple[int, str]] = []
    v = node_id
    while parents[v] != -1:
        steps.append((positions[v], ast.nodes[v].label))
        v = parents[v]
    steps.reverse()
    return NodePath(root_label=ast.nodes[ast.root_id].label, steps=tuple(steps))


def canonical_serialization(ast: AnnotatedAst) -> str:
    """Deterministic shape-and-label string; weights and task_id excluded.

    Equal strings iff the trees are label-and-shape identical, so this is the
    deduplication key for label sets.
    """
    rendered: list[str | None] = [None] * ast.n_nodes
    for v in reversed(ast.preorder()):
        node = ast.nodes[v]
        inner = ",".join(rendered[c] for c in node.children)  # type: ignore[misc]
        rendered[v] = json.dumps(node.label) + "[" + inner + "]"
    out = rendered[ast.root_id]
    assert out is not None
    return out
