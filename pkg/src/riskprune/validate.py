"""Statistical validation suites.

Each suite exercises one guarantee end to end on seeded synthetic data and
reports measured value, bound, and verdict. Monte-Carlo checks use 3
standard-error tolerance bands (binomial variance at the target rate) so the
pass/fail outcome is deterministic per seed. The CLI `validate` subcommand
and the acceptance tests both run these functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .ltt import (
    LambdaGrid,
    LttConfig,
    binomial_tail_pvalue,
    bonferroni,
    calibrate,
    fixed_sequence,
    holm_bonferroni,
)
from .pruner import PruneConfig, prune_bruteforce, prune_exact, prune_greedy, removal_count
from .selective import SelectiveConfig, SelectiveSample, error_upper_bound, hoeffding_delta
from .sim import (
    SyntheticConfig,
    generate_tasks,
    run_epsilon_sweep,
    run_m_sweep,
    run_selective_trials,
    run_trials,
)
from .ast_model import AnnotatedAst, AstNode


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    measured: str
    bound: str

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"{verdict} {self.name}: measured {self.measured}, bound {self.bound}"


def _mc_floor(rate: float, trials: int) -> float:
    return rate - 3.0 * math.sqrt(rate * (1.0 - rate) / trials)


def _random_instance(rng: np.random.Generator):
    n = int(rng.integers(2, 13))
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
    ast = AnnotatedAst(task_id=f"rand-{n}", root_id=0, nodes=nodes)
    total = sum(node.weight for node in nodes)
    lam = float(rng.uniform(0.0, total * 1.1))
    t_max = int(rng.integers(1, 4))
    return ast, PruneConfig(lam=lam, t_max=t_max)


# -- pruner ---------------------------------------------------------------------


def suite_pruner_oracle(seed: int = 0, n_instances: int = 500) -> list[CheckResult]:
    rng = np.random.default_rng(np.random.SeedSequence((seed, 101)))
    mismatches = 0
    greedy_violations = 0
    for _ in range(n_instances):
        ast, cfg = _random_instance(rng)
        exact = prune_exact(ast, cfg)
        brute = prune_bruteforce(ast, cfg)
        if exact.removed != brute.removed:
            mismatches += 1
        if removal_count(prune_greedy(ast, cfg)) < removal_count(exact):
            greedy_violations += 1

    mono_violations = 0
    cfg = SyntheticConfig(n_tasks=30, seed=seed + 202)
    for task in generate_tasks(cfg):
        ast = task.record.generated
        for t_max in (1, 2):
            prev = None
            for lam in np.arange(0.0, sum(n.weight for n in ast.nodes) + 0.05, 0.02):
                count = removal_count(prune_exact(ast, PruneConfig(lam=float(lam), t_max=t_max)))
                if prev is not None and count > prev:
                    mono_violations += 1
                prev = count

    return [
        CheckResult(
            name="prune-exact-matches-bruteforce",
            passed=mismatches == 0,
            measured=f"{mismatches}/{n_instances} mismatches",
            bound="0 allowed",
        ),
        CheckResult(
            name="greedy-never-removes-fewer-than-exact",
            passed=greedy_violations == 0,
            measured=f"{greedy_violations}/{n_instances} violations",
            bound="0 allowed",
        ),
        CheckResult(
            name="removal-count-non-increasing-in-budget",
            passed=mono_violations == 0,
            measured=f"{mono_violations} adjacent-pair violations",
            bound="0 allowed",
        ),
    ]


# -- p-values -------------------------------------------------------------------


def suite_pvalues(seed: int = 0, draws: int = 20_000) -> list[CheckResult]:
    # closed forms: e*(1-a)^n at zero risk, plus the k=1 term for one failure.
    # To six digits these are 0.031340 and 0.091839.
    frozen = [
        ((20, 0.2, 0.0), math.e * 0.8**20),
        ((50, 0.1, 0.02), math.e * (0.9**50 + 50 * 0.1 * 0.9**49)),
    ]
    worst = max(abs(binomial_tail_pvalue(*args) - want) for args, want in frozen)
    results = [
        CheckResult(
            name="pvalue-closed-form-values",
            passed=worst < 1e-6,
            measured=f"max abs error {worst:.2e}",
            bound="< 1e-6",
        )
    ]

    # super-uniformity at the null boundary: true risk exactly alpha
    n, alpha = 50, 0.1
    rng = np.random.default_rng(np.random.SeedSequence((seed, 303)))
    table = np.array([binomial_tail_pvalue(n, alpha, k / n) for k in range(n + 1)])
    pvals = table[rng.binomial(n, alpha, size=draws)]
    ok = True
    details = []
    for u in (0.01, 0.05, 0.1, 0.25, 0.5):
        rate = float(np.mean(pvals <= u))
        limit = u + 3.0 * math.sqrt(u * (1.0 - u) / draws)
        details.append(f"P(p<={u})={rate:.4f}")
        ok = ok and rate <= limit
    results.append(
        CheckResult(
            name="pvalue-super-uniform-at-null",
            passed=ok,
            measured="; ".join(details),
            bound="<= u + 3*SE each",
        )
    )
    return results


# -- FWER -----------------------------------------------------------------------


def _all_null_grid(seed: int) -> LambdaGrid:
    """Budgets pinned at upper quantiles of the per-task coverage threshold,
    so the true risk strictly exceeds alpha at every grid point."""
    pilot = SyntheticConfig(n_tasks=4000, m=3, seed=seed)
    stars = np.array([task.lambda_star for task in generate_tasks(pilot)])
    # 0.12 sits just above alpha=0.1: the only regime where a false rejection
    # is even plausible, keeping the check non-vacuous
    values = sorted({float(np.quantile(stars, q)) for q in (0.12, 0.2, 0.3, 0.5)})
    return LambdaGrid(tuple(values))


def suite_fwer(seed: int = 0, n_trials: int = 2000) -> list[CheckResult]:
    delta = 0.1
    grid = _all_null_grid(seed + 404)
    cfg_data = SyntheticConfig(n_tasks=60, m=3, seed=seed + 505)
    ltt = LttConfig(alpha=0.1, delta=delta, grid=grid)
    hits = {"bonferroni": 0, "holm": 0, "fst": 0}
    for t in range(n_trials):
        records = [
            task.record
            for task in generate_tasks(cfg_data, seed=int(np.random.SeedSequence((seed, 606, t)).generate_state(1)[0]))
        ]
        result = calibrate(records, ltt)
        if bonferroni(result.pvalues, delta):
            hits["bonferroni"] += 1
        if holm_bonferroni(result.pvalues, delta):
            hits["holm"] += 1
        if fixed_sequence(result.pvalues, delta, ltt.fst_starts):
            hits["fst"] += 1

    limit = delta + 3.0 * math.sqrt(delta * (1.0 - delta) / n_trials)
    results = [
        CheckResult(
            name=f"fwer-all-null-{method}",
            passed=hits[method] / n_trials <= limit,
            measured=f"false-rejection rate {hits[method] / n_trials:.4f}",
            bound=f"<= {limit:.4f}",
        )
        for method in ("bonferroni", "holm", "fst")
    ]

    rng = np.random.default_rng(np.random.SeedSequence((seed, 707)))
    subset_violations = 0
    for _ in range(1000):
        n = int(rng.integers(1, 41))
        p = rng.uniform(0.0, 1.0, size=n) ** 2
        if not bonferroni(p, delta) <= holm_bonferroni(p, delta):
            subset_violations += 1
    results.append(
        CheckResult(
            name="holm-rejects-superset-of-bonferroni",
            passed=subset_violations == 0,
            measured=f"{subset_violations}/1000 violations",
            bound="0 allowed",
        )
    )
    return results


# -- calibration coverage ----------------------------------------------------------


def _coverage_rate(report) -> float:
    return float(np.mean([row.coverage for row in report.rows]))


def suite_coverage(seed: int = 0, n_trials: int = 200) -> list[CheckResult]:
    cfg = SyntheticConfig(n_tasks=200, m=20, seed=seed + 808)
    ltt = LttConfig(alpha=0.1, delta=0.1, t_max=1, fwer="fst", grid_step=0.02)
    report = run_trials(cfg, ltt, n_trials=n_trials, split=0.5)
    rate = _coverage_rate(report)
    floor = _mc_floor(1.0 - ltt.delta, n_trials)
    abstained = sum(row.abstained for row in report.rows)
    return [
        CheckResult(
            name="calibrated-risk-within-alpha",
            passed=rate >= floor,
            measured=f"coverage {rate:.4f} over {n_trials} trials ({abstained} abstained)",
            bound=f">= {floor:.4f}",
        )
    ]


def suite_trends(seed: int = 0, n_trials: int = 50) -> list[CheckResult]:
    results = []

    # coverage stays above the 1-alpha target across the alpha sweep
    cfg = SyntheticConfig(n_tasks=200, m=20, seed=seed + 909)
    ltt = LttConfig(alpha=0.1, delta=0.1, fst_starts=5)
    ok = True
    details = []
    for alpha in (0.05, 0.1, 0.15, 0.2, 0.25, 0.3):
        report = run_trials(cfg, replace(ltt, alpha=alpha), n_trials=n_trials, split=0.5)
        rate = _coverage_rate(report)
        details.append(f"a={alpha:.2f}:{rate:.3f}")
        ok = ok and rate >= _mc_floor(1.0 - alpha, n_trials)
    results.append(
        CheckResult(
            name="coverage-above-target-across-alpha",
            passed=ok,
            measured="; ".join(details),
            bound=">= 1-alpha - 3*SE each",
        )
    )

    # richer sampling never increases removals (beyond 1 SE of the difference)
    m_trials = max(20, n_trials // 2)
    mcfg = SyntheticConfig(n_tasks=120, m=20, seed=seed + 1010)
    mrep = run_m_sweep(mcfg, replace(ltt, fst_starts=10), ms=(1, 5, 20, 80), n_trials=m_trials)
    by_m = {}
    for m in (1, 5, 20, 80):
        vals = np.array(
            [r.removal_fraction for r in mrep.rows if r.m == m and r.removal_fraction is not None]
        )
        by_m[m] = (float(vals.mean()), float(vals.std() / math.sqrt(max(1, vals.size))))
    ok = True
    for a, b in zip((1, 5, 20), (5, 20, 80)):
        se_diff = math.hypot(by_m[a][1], by_m[b][1])
        ok = ok and by_m[b][0] <= by_m[a][0] + se_diff
    results.append(
        CheckResult(
            name="mean-removal-non-increasing-in-samples",
            passed=ok,
            measured="; ".join(f"m={m}:{by_m[m][0]:.4f}" for m in (1, 5, 20, 80)),
            bound="non-increasing within 1 SE of each difference",
        )
    )
    return results


# -- selective execution ------------------------------------------------------------


def _bound_coverage(seed: int, reps: int, cfg: SelectiveConfig, u: float) -> float:
    """Fraction of draw-phase replications whose bound covers the true error."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 1111)))
    m = 500
    losses = (np.arange(m) % 10 < 3).astype(float)  # 30% wrong
    scores = rng.permutation(m) / m
    true_l = float(np.mean(losses * (scores <= u)))
    covered = 0
    for _ in range(reps):
        idx = rng.integers(0, m, size=cfg.h)
        samples = [
            SelectiveSample(
                j=j,
                index=int(i),
                u=float(scores[i]),
                weight=1.0,
                xi=True,
                executed_loss=int(losses[i]),
                z=float(losses[i]),
            )
            for j, i in enumerate(idx)
        ]
        if error_upper_bound(samples, u, cfg) >= true_l:
            covered += 1
    return covered / reps


def suite_selective(seed: int = 0, reps: int = 2000, e2e_trials: int = 300) -> list[CheckResult]:
    want = math.sqrt(math.log(40.0) / 2000.0)
    got = hoeffding_delta(1000, 0.05, 1.0)
    results = [
        CheckResult(
            name="hoeffding-deviation-closed-form",
            passed=abs(got - want) < 1e-7,
            measured=f"{got:.10f}",
            bound=f"= {want:.10f} +- 1e-7",
        )
    ]

    configs = [
        ("hoeffding-bound-coverage", SelectiveConfig(epsilon=0.1, gamma=0.05, h=1000, bound="hoeffding")),
        ("clt-bound-coverage-h200", SelectiveConfig(epsilon=0.1, gamma=0.05, h=200, bound="clt")),
        ("clt-bound-coverage-h1000", SelectiveConfig(epsilon=0.1, gamma=0.05, h=1000, bound="clt")),
    ]
    for name, cfg in configs:
        rate = _bound_coverage(seed, reps, cfg, u=0.5)
        floor = _mc_floor(1.0 - cfg.gamma, reps)
        results.append(
            CheckResult(
                name=name,
                passed=rate >= floor,
                measured=f"coverage {rate:.4f} over {reps} replications",
                bound=f">= {floor:.4f}",
            )
        )

    # end to end: selective labels inflate the risk level by at most eps*(1-alpha)
    data = SyntheticConfig(n_tasks=80, m=12, seed=seed + 1212)
    sel = SelectiveConfig(epsilon=0.1, gamma=0.05, h=160, bound="hoeffding")
    ltt = LttConfig(alpha=0.1, delta=0.1)
    report = run_selective_trials(data, sel, ltt, n_trials=e2e_trials, split=0.5)
    rate = _coverage_rate(report)
    target_rate = (1.0 - sel.gamma) * (1.0 - ltt.delta)
    floor = _mc_floor(target_rate, e2e_trials)
    results.append(
        CheckResult(
            name="selective-calibration-risk-within-inflated-alpha",
            passed=rate >= floor,
            measured=f"P(risk <= {report.rows[0].target:.3f}) = {rate:.4f}",
            bound=f">= {floor:.4f}",
        )
    )

    # epsilon 0 must reproduce exhaustive labeling exactly
    small = SyntheticConfig(n_tasks=40, m=8, seed=seed + 1313)
    plain = run_trials(small, ltt, n_trials=8, split=0.5)
    zero = run_selective_trials(
        small, replace(sel, epsilon=0.0), ltt, n_trials=8, split=0.5
    )
    same = all(
        (a.lambda_hat, a.test_risk, a.removal_fraction, a.coverage)
        == (b.lambda_hat, b.test_risk, b.removal_fraction, b.coverage)
        for a, b in zip(plain.rows, zero.rows)
    )
    results.append(
        CheckResult(
            name="epsilon-zero-matches-exhaustive-labeling",
            passed=same,
            measured="bit-exact" if same else "diverged",
            bound="exact equality",
        )
    )

    # larger label-error budgets skip more executions
    erep = run_epsilon_sweep(
        data, sel, ltt, epsilons=(0.05, 0.1, 0.2, 0.3), n_trials=25, split=0.5
    )
    saved = {}
    for eps in (0.05, 0.1, 0.2, 0.3):
        vals = [r.fraction_saved for r in erep.rows if r.epsilon == eps]
        saved[eps] = float(np.mean(vals))
    seq = [saved[e] for e in (0.05, 0.1, 0.2, 0.3)]
    ok = all(b >= a - 1e-9 for a, b in zip(seq, seq[1:])) and seq[-1] > seq[0]
    results.append(
        CheckResult(
            name="fraction-saved-increases-with-epsilon",
            passed=ok,
            measured="; ".join(f"eps={e}:{saved[e]:.3f}" for e in (0.05, 0.1, 0.2, 0.3)),
            bound="non-decreasing, strictly overall",
        )
    )
    return results


def _suite_coverage_full(seed: int = 0) -> list[CheckResult]:
    return suite_coverage(seed) + suite_trends(seed)


SUITES = {
    "pruner-oracle": suite_pruner_oracle,
    "pvalues": suite_pvalues,
    "fwer": suite_fwer,
    "coverage": _suite_coverage_full,
    "selective": suite_selective,
}


def run_suite(name: str, seed: int = 0) -> list[CheckResult]:
    if name == "all":
        out = []
        for suite in SUITES.values():
            out.extend(suite(seed))
        return out
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {sorted(SUITES)} or 'all'")
    return SUITES[name](seed)
