import numpy as np
import pytest

from riskprune.ast_model import AnnotatedAst, AstNode
from riskprune.pruner import (
    BRUTE_FORCE_MAX_NODES,
    PruneConfig,
    PruneTimeoutError,
    RemovalMismatchError,
    RemovalSet,
    check_consistent,
    make_removal,
    prune_bruteforce,
    prune_exact,
    prune_greedy,
    removal_count,
    removal_from_obj,
    removal_roots,
    removal_to_obj,
    retained_weight,
    validate_removal,
)

from .conftest import build_ast, random_ast


def test_tiny_budget_one_root(tiny):
    # no single subtree removal reaches retained <= 1.0; full removal wins
    removal = prune_exact(tiny, PruneConfig(lam=1.0, t_max=1))
    assert removal.removed == frozenset({0, 1, 2, 3})
    assert retained_weight(tiny, removal) == 0.0


def test_tiny_budget_two_roots(tiny):
    removal = prune_exact(tiny, PruneConfig(lam=1.0, t_max=2))
    assert removal.removed == frozenset({1, 3})
    assert retained_weight(tiny, removal) == pytest.approx(0.4)
    assert removal_roots(tiny, removal) == (1, 3)


def test_tiny_greedy_removes_heaviest(tiny):
    removal = prune_greedy(tiny, PruneConfig(lam=1.9, t_max=1))
    assert removal.removed == frozenset({1})
    removal = prune_exact(tiny, PruneConfig(lam=1.9, t_max=1))
    assert removal.removed == frozenset({1})


def test_single_node_boundary():
    ast = build_ast("one", ("X", 0.5, []))
    assert prune_exact(ast, PruneConfig(lam=0.0, t_max=1)).removed == frozenset({0})
    assert prune_exact(ast, PruneConfig(lam=0.5, t_max=1)).removed == frozenset()


def test_zero_weight_nodes_prefer_fewer_removals():
    ast = build_ast("z", ("r", 0.0, [("a", 0.0, []), ("b", 1.0, [])]))
    removal = prune_exact(ast, PruneConfig(lam=0.0, t_max=2))
    # removing b alone reaches 0.0 retained; zero-weight a stays
    assert removal.removed == frozenset({2})


def test_tie_breaks_lexicographic():
    # two identical children: either alone meets the budget; smaller id wins
    ast = build_ast("tie", ("r", 0.1, [("a", 1.0, []), ("a", 1.0, [])]))
    removal = prune_exact(ast, PruneConfig(lam=1.2, t_max=2))
    assert removal.removed == frozenset({1})
    assert prune_bruteforce(ast, PruneConfig(lam=1.2, t_max=2)).removed == frozenset({1})


@pytest.mark.parametrize("t_max", [1, 2, 3])
def test_exact_matches_bruteforce(t_max):
    rng = np.random.default_rng(20260814 + t_max)
    for _ in range(200):
        ast = random_ast(rng)
        total = sum(n.weight for n in ast.nodes)
        lam = float(rng.uniform(0.0, 1.1 * total))
        cfg = PruneConfig(lam=lam, t_max=t_max)
        got = prune_exact(ast, cfg)
        want = prune_bruteforce(ast, cfg)
        assert got.removed == want.removed, (ast, lam, t_max)
        validate_removal(ast, got, t_max)


def test_removal_count_monotone_in_budget():
    rng = np.random.default_rng(7)
    for _ in range(40):
        ast = random_ast(rng)
        total = sum(n.weight for n in ast.nodes)
        for t_max in (1, 2):
            counts = [
                removal_count(prune_exact(ast, PruneConfig(lam=lam, t_max=t_max)))
                for lam in np.arange(0.0, total + 0.05, 0.05)
            ]
            assert all(a >= b for a, b in zip(counts, counts[1:]))


def test_greedy_dominates_exact():
    rng = np.random.default_rng(11)
    for _ in range(200):
        ast = random_ast(rng)
        total = sum(n.weight for n in ast.nodes)
        lam = float(rng.uniform(0.0, 1.1 * total))
        t_max = int(rng.integers(1, 4))
        cfg = PruneConfig(lam=lam, t_max=t_max)
        greedy = prune_greedy(ast, cfg)
        exact = prune_exact(ast, cfg)
        validate_removal(ast, greedy, t_max)
        assert removal_count(greedy) >= removal_count(exact)


def test_feasibility_of_outputs():
    rng = np.random.default_rng(13)
    for _ in range(100):
        ast = random_ast(rng)
        total = sum(n.weight for n in ast.nodes)
        lam = float(rng.uniform(0.0, total))
        for strategy in (prune_exact, prune_greedy):
            removal = strategy(ast, PruneConfig(lam=lam, t_max=2))
            assert retained_weight(ast, removal) <= lam + 1e-9
            assert len(removal_roots(ast, removal)) <= 2 or removal.removed == frozenset(
                range(ast.n_nodes)
            )


def test_bruteforce_refuses_large_trees():
    n = BRUTE_FORCE_MAX_NODES + 1
    chain = ("x", 0.1, [])
    for _ in range(n - 1):
        chain = ("x", 0.1, [chain])
    ast = build_ast("big", chain)
    assert ast.n_nodes == n
    with pytest.raises(ValueError, match="brute force"):
        prune_bruteforce(ast, PruneConfig(lam=0.5, t_max=1))


def test_downward_closure():
    rng = np.random.default_rng(17)
    for _ in range(60):
        ast = random_ast(rng)
        total = sum(n.weight for n in ast.nodes)
        removal = prune_exact(ast, PruneConfig(lam=float(rng.uniform(0, total)), t_max=3))
        parents = ast.parents()
        for v in removal.removed:
            for c in ast.nodes[v].children:
                assert c in removal.removed
        check_consistent(ast, removal)
        assert parents is ast.parents()


def test_removal_set_validation(tiny):
    with pytest.raises(RemovalMismatchError):
        check_consistent(tiny, RemovalSet(task_id="tiny", n_nodes=4, removed=frozenset({9})))
    with pytest.raises(RemovalMismatchError):
        check_consistent(tiny, RemovalSet(task_id="tiny", n_nodes=7, removed=frozenset()))
    with pytest.raises(RemovalMismatchError):
        check_consistent(
            tiny, RemovalSet(task_id="other", n_nodes=4, removed=frozenset())
        )
    with pytest.raises(ValueError, match="SC2"):
        validate_removal(tiny, make_removal(tiny, {1, 3}), t_max=1)
    with pytest.raises(ValueError, match="SC1"):
        validate_removal(tiny, make_removal(tiny, {2}), t_max=1)


def test_timeout_raises():
    # wide tree large enough that the DP cannot finish within 1 ms
    spec = ("root", 0.01, [("x", 0.01, [("y", 0.01, []) for _ in range(3)]) for _ in range(400)])
    ast = build_ast("slow", spec)
    with pytest.raises(PruneTimeoutError):
        prune_exact(ast, PruneConfig(lam=0.02, t_max=3, time_limit_ms=1))


def test_removal_json_roundtrip(tiny):
    removal = prune_exact(tiny, PruneConfig(lam=1.0, t_max=2))
    obj = removal_to_obj(removal)
    assert set(obj) == {"task_id", "removed"}
    assert obj["removed"] == [1, 3]
    again = removal_from_obj(obj, tiny)
    assert again == removal
