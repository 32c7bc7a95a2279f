"""Budgeted AST pruning.

Given a weight budget lam, choose a set of nodes to remove so that the
retained weight is at most lam while removing as few nodes as possible,
subject to two structure constraints:

  SC1  removal is downward-closed: removing a node removes its whole subtree;
  SC2  at most t_max removal roots, where a removal root is a removed node
       whose parent is retained. Removing the tree root removes everything
       and counts zero against SC2 (the count ranges over edges only).

Feasible solutions are therefore exactly: the full-tree removal, plus every
antichain of non-root subtrees of size <= t_max. Three solvers share that
contract: prune_exact (tree dynamic program with lexicographic tie-break
reconstruction), prune_bruteforce (independent exhaustive oracle for small
trees), and prune_greedy (the largest-weight-first baseline).

Ties among minimum-cardinality optima are broken by the lexicographically
smallest sorted removal-root id list.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass

from .ast_model import AnnotatedAst, total_weight

_NEG = float("-inf")

BRUTE_FORCE_MAX_NODES = 20


class PruneTimeoutError(RuntimeError):
    """The exact solver exceeded its configured time limit."""


class RemovalMismatchError(ValueError):
    """A RemovalSet was applied to an AST it does not describe."""


@dataclass(frozen=True)
class PruneConfig:
    """Budget lam (nats), removal-root cap t_max >= 1, optional solver time limit."""

    lam: float
    t_max: int
    time_limit_ms: int | None = None

    def __post_init__(self) -> None:
        if not math.isfinite(self.lam) or self.lam < 0:
            raise ValueError(f"budget must be finite and >= 0, got {self.lam}")
        if self.t_max < 1:
            raise ValueError(f"t_max must be >= 1, got {self.t_max}")
        if self.time_limit_ms is not None and self.time_limit_ms <= 0:
            raise ValueError("time_limit_ms must be positive when set")


@dataclass(frozen=True)
class RemovalSet:
    """Node removal assignment for one AST (referenced by task_id + node count)."""

    task_id: str
    n_nodes: int
    removed: frozenset[int]


def make_removal(ast: AnnotatedAst, removed_ids) -> RemovalSet:
    return RemovalSet(ast.task_id, ast.n_nodes, frozenset(removed_ids))


def check_consistent(ast: AnnotatedAst, removal: RemovalSet) -> None:
    if removal.task_id != ast.task_id or removal.n_nodes != ast.n_nodes:
        raise RemovalMismatchError(
            f"removal for task {removal.task_id!r} ({removal.n_nodes} nodes) does not "
            f"match AST for task {ast.task_id!r} ({ast.n_nodes} nodes)"
        )
    for v in removal.removed:
        if not 0 <= v < ast.n_nodes:
            raise RemovalMismatchError(f"removed id {v} out of range")


def removal_roots(ast: AnnotatedAst, removal: RemovalSet) -> tuple[int, ...]:
    """Sorted ids of removed nodes whose parent is retained (root never counts)."""
    check_consistent(ast, removal)
    parents = ast.parents()
    removed = removal.removed
    return tuple(sorted(v for v in removed if parents[v] != -1 and parents[v] not in removed))


def retained_weight(ast: AnnotatedAst, removal: RemovalSet) -> float:
    check_consistent(ast, removal)
    return math.fsum(n.weight for n in ast.nodes if n.id not in removal.removed)


def removal_count(removal: RemovalSet) -> int:
    return len(removal.removed)


def validate_removal(ast: AnnotatedAst, removal: RemovalSet, t_max: int) -> None:
    """Assert SC1 (downward closure) and SC2 (root count <= t_max)."""
    check_consistent(ast, removal)
    removed = removal.removed
    for v in removed:
        for c in ast.nodes[v].children:
            if c not in removed:
                raise ValueError(f"SC1 violated: node {v} removed but child {c} retained")
    roots = removal_roots(ast, removal)
    if len(roots) > t_max:
        raise ValueError(f"SC2 violated: {len(roots)} removal roots > t_max={t_max}")


# -- exact solver ------------------------------------------------------------


def _deadline(cfg: PruneConfig) -> float | None:
    if cfg.time_limit_ms is None:
        return None
    return time.monotonic() + cfg.time_limit_ms / 1000.0


def _check_deadline(deadline: float | None) -> None:
    if deadline is not None and time.monotonic() > deadline:
        raise PruneTimeoutError("prune_exact exceeded its time limit")


def _single_root_index(ast: AnnotatedAst):
    """Per-AST index answering: best (size, id) subtree with weight >= r, O(log n).

    Candidates are non-root subtrees sorted by descending subtree weight with a
    running prefix minimum of (size, id), so any weight requirement maps to a
    prefix of the candidate list.
    """
    sizes = ast.subtree_sizes()
    weights = ast.subtree_weights()
    cands = sorted(
        (v for v in range(ast.n_nodes) if v != ast.root_id),
        key=lambda v: -weights[v],
    )
    neg_weights = [-weights[v] for v in cands]
    best: list[tuple[int, int]] = []
    cur = (ast.n_nodes + 1, -1)
    for v in cands:
        cur = min(cur, (sizes[v], v))
        best.append(cur)
    return neg_weights, best


def _prune_exact_single(ast: AnnotatedAst, r: float) -> frozenset[int]:
    neg_weights, best = ast._memo("single_root_index", lambda: _single_root_index(ast))
    # candidates sorted ascending in -weight; weight >= r means -weight <= -r
    hi = _prefix_len(neg_weights, -r)
    if hi == 0:
        return frozenset(range(ast.n_nodes))
    _, root = best[hi - 1]
    return frozenset(ast.subtree_ids(root))


def _prefix_len(neg_weights: list[float], neg_r: float) -> int:
    """Length of the prefix with -weight <= -r, i.e. weight >= r."""
    lo, hi = 0, len(neg_weights)
    while lo < hi:
        mid = (lo + hi) // 2
        if neg_weights[mid] <= neg_r:
            lo = mid + 1
        else:
            hi = mid
    return lo


def _antichain_max_weights(
    ast: AnnotatedAst,
    allowed,
    max_roots: int,
    deadline: float | None,
) -> list[float]:
    """out[c] = max total weight of an antichain of allowed subtrees with
    at most max_roots members and total subtree size exactly c; -inf if none."""
    sizes = ast.subtree_sizes()
    weights = ast.subtree_weights()
    J = max_roots
    tables: dict[int, list[list[float]]] = {}
    for v in reversed(ast.preorder()):
        _check_deadline(deadline)
        node = ast.nodes[v]
        cur = [[0.0] for _ in range(J + 1)]
        csize = 0
        for u in node.children:
            su = sizes[u]
            fu = tables.pop(u)
            width = csize + su + 1
            new = [[_NEG] * width for _ in range(J + 1)]
            for j in range(J + 1):
                row = cur[j]
                for c in range(csize + 1):
                    base = row[c]
                    if base == _NEG:
                        continue
                    for ju in range(J - j + 1):
                        frow = fu[ju]
                        out = new[j + ju]
                        for cu, w in enumerate(frow):
                            if w != _NEG and base + w > out[c + cu]:
                                out[c + cu] = base + w
            cur = new
            csize += su
        # selecting v itself removes subtree(v) whole: one root, size_v count
        width = sizes[v] + 1
        for j in range(J + 1):
            cur[j].extend([_NEG] * (width - len(cur[j])))
        if allowed[v]:
            for j in range(1, J + 1):
                if weights[v] > cur[j][sizes[v]]:
                    cur[j][sizes[v]] = weights[v]
        tables[v] = cur
    return tables[ast.root_id][J]


def _lex_reconstruct(
    ast: AnnotatedAst,
    t_max: int,
    c_star: int,
    r: float,
    deadline: float | None,
) -> frozenset[int]:
    """Lexicographically smallest sorted removal-root list achieving count c_star
    and removed weight >= r with at most t_max roots."""
    n = ast.n_nodes
    sizes = ast.subtree_sizes()
    weights = ast.subtree_weights()
    parents = ast.parents()
    base_allowed = [v != ast.root_id for v in range(n)]

    chosen: list[int] = []
    count_left = c_star
    weight_left = r
    roots_left = t_max
    last = -1
    while count_left > 0:
        placed = False
        for t in range(last + 1, n):
            if not base_allowed[t] or sizes[t] > count_left:
                continue
            need_count = count_left - sizes[t]
            need_weight = weight_left - weights[t]
            if need_count == 0:
                ok = need_weight <= 0
            elif roots_left <= 1:
                ok = False
            else:
                allowed = list(base_allowed)
                for u in ast.subtree_ids(t):
                    allowed[u] = False
                p = parents[t]
                while p != -1:
                    allowed[p] = False
                    p = parents[p]
                for u in range(t + 1):
                    allowed[u] = False
                row = _antichain_max_weights(ast, allowed, min(roots_left - 1, n), deadline)
                ok = need_count < len(row) and row[need_count] >= need_weight
            if ok:
                chosen.append(t)
                count_left = need_count
                weight_left = need_weight
                roots_left -= 1
                for u in ast.subtree_ids(t):
                    base_allowed[u] = False
                p = parents[t]
                while p != -1:
                    base_allowed[p] = False
                    p = parents[p]
                last = t
                placed = True
                break
        if not placed:
            raise AssertionError("internal error: optimal count certified but not reconstructable")
    removed: set[int] = set()
    for v in chosen:
        removed.update(ast.subtree_ids(v))
    return frozenset(removed)


def prune_exact(ast: AnnotatedAst, cfg: PruneConfig) -> RemovalSet:
    """Minimum-cardinality feasible removal; deterministic lexicographic tie-break."""
    r = total_weight(ast) - cfg.lam
    if r <= 0:
        return make_removal(ast, ())
    if cfg.t_max == 1:
        return make_removal(ast, _prune_exact_single(ast, r))
    deadline = _deadline(cfg)
    allowed = [v != ast.root_id for v in range(ast.n_nodes)]
    row = _antichain_max_weights(ast, allowed, min(cfg.t_max, ast.n_nodes), deadline)
    c_star = next((c for c in range(1, len(row)) if row[c] >= r), None)
    if c_star is None:
        return make_removal(ast, range(ast.n_nodes))
    removed = _lex_reconstruct(ast, cfg.t_max, c_star, r, deadline)
    return make_removal(ast, removed)


# -- brute-force oracle -------------------------------------------------------


def prune_bruteforce(ast: AnnotatedAst, cfg: PruneConfig) -> RemovalSet:
    """Exhaustive enumeration of every feasible removal set; trees of <= 20 nodes.

    Independent of prune_exact: enumerates all subsets of non-root nodes up to
    size t_max, filters to antichains, and checks the budget on the literal
    retained-weight sum.
    """
    n = ast.n_nodes
    if n > BRUTE_FORCE_MAX_NODES:
        raise ValueError(f"tree too large for brute force ({n} > {BRUTE_FORCE_MAX_NODES} nodes)")
    pre = ast.preorder_index()
    sizes = ast.subtree_sizes()

    def is_antichain(combo: tuple[int, ...]) -> bool:
        for a, b in itertools.combinations(combo, 2):
            if pre[a] <= pre[b] < pre[a] + sizes[a]:
                return False
            if pre[b] <= pre[a] < pre[b] + sizes[b]:
                return False
        return True

    non_root = [v for v in range(n) if v != ast.root_id]
    # full removal is always feasible; every antichain solution beats it on count
    best_key: tuple[int, tuple[int, ...]] = (n, ())
    best_removed: frozenset[int] = frozenset(range(n))
    for k in range(0, min(cfg.t_max, len(non_root)) + 1):
        for combo in itertools.combinations(non_root, k):
            if not is_antichain(combo):
                continue
            removed = set()
            for v in combo:
                removed.update(ast.subtree_ids(v))
            if math.fsum(nd.weight for nd in ast.nodes if nd.id not in removed) <= cfg.lam:
                key = (len(removed), combo)
                if key < best_key:
                    best_key = key
                    best_removed = frozenset(removed)
    return make_removal(ast, best_removed)


# -- greedy baseline ----------------------------------------------------------


def prune_greedy(ast: AnnotatedAst, cfg: PruneConfig) -> RemovalSet:
    """Repeatedly remove the feasible subtree that sheds the most weight.

    Candidate moves remove a retained non-root subtree, possibly swallowing
    existing removal roots below it, and must keep the root count within
    t_max. Ties break toward the smallest subtree root id. When no move can
    shed weight the whole tree is removed.
    """
    n = ast.n_nodes
    weights = [nd.weight for nd in ast.nodes]
    retained = total_weight(ast)
    if retained <= cfg.lam:
        return make_removal(ast, ())
    removed: set[int] = set()
    roots: set[int] = set()
    pre = ast.preorder_index()
    sizes = ast.subtree_sizes()

    def inside(a: int, b: int) -> bool:
        """True when b lies in subtree(a)."""
        return pre[a] <= pre[b] < pre[a] + sizes[a]

    while retained > cfg.lam:
        best: tuple[float, int] | None = None  # (reduction, id), max reduction then min id
        for v in range(n):
            if v == ast.root_id or v in removed:
                continue
            swallowed = sum(1 for a in roots if inside(v, a))
            if len(roots) - swallowed + 1 > cfg.t_max:
                continue
            reduction = math.fsum(weights[u] for u in ast.subtree_ids(v) if u not in removed)
            if reduction <= 0:
                continue
            if best is None or (reduction, -v) > (best[0], -best[1]):
                best = (reduction, v)
        if best is None:
            return make_removal(ast, range(n))
        _, v = best
        roots = {a for a in roots if not inside(v, a)}
        roots.add(v)
        removed.update(ast.subtree_ids(v))
        retained = math.fsum(weights[u] for u in range(n) if u not in removed)
    return make_removal(ast, removed)


# -- JSON ----------------------------------------------------------------------


def removal_to_obj(removal: RemovalSet) -> dict:
    return {"task_id": removal.task_id, "removed": sorted(removal.removed)}


def removal_from_obj(obj, ast: AnnotatedAst) -> RemovalSet:
    if not isinstance(obj, dict) or set(obj) != {"task_id", "removed"}:
        raise ValueError("removal JSON must have exactly the fields task_id, removed")
    removal = RemovalSet(obj["task_id"], ast.n_nodes, frozenset(obj["removed"]))
    check_consistent(ast, removal)
    return removal
