"""Monte-Carlo harness on synthetic program trees.

Every statistical guarantee in this package is checked here at desk scale,
without a language model in the loop. The synthetic generator builds, per
task, a random tree with exactly one "wrong" leaf. Correct variants replace
a node on the root-to-wrong-leaf chain with a fix node; deeper fixes are
rarer. With miscalibration 0 the wrong leaf carries more weight than the
rest of the tree combined, so weight-budget pruning removes wrong subtrees
first and each task has an analytically known budget threshold: the set loss
is 0 exactly below it. That threshold is the independent oracle the
calibration tests compare against.

Seeding: every trial consumes generators derived from
(master seed, trial index, stream label), so runs are bit-reproducible and
selective-execution randomness never perturbs data generation.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .ast_model import AnnotatedAst, AstNode, total_weight
from .ltt import CalibrationResult, LttConfig, calibrate
from .pruner import PruneConfig
from .risk_eval import CalibrationRecord, empirical_risk
from .selective import SelectiveConfig, run_selective_execution

WEIGHT_MODELS = ("uniform", "heavy-tail")

# stream labels for per-trial derived generators
_STREAM_DATA = 0
_STREAM_SPLIT = 1
_STREAM_SELECT = 2

FIX_LABEL = "fix"
_NODE_LABELS = ("stmt", "expr", "call", "cond", "loop", "ret", "asgn", "blk")


@dataclass(frozen=True)
class LabelModel:
    """How sampled variants relate to the wrong leaf.

    depth_decay: chance ratio between consecutive chain depths; smaller
    values make deep fixes rarer, so richer sampling is needed to observe
    them. correct_prob: chance that a sample fixes the actual wrong chain
    (the first sample always does, keeping label sets non-empty).
    """

    depth_decay: float = 0.5
    correct_prob: float = 0.7

    def __post_init__(self) -> None:
        if not 0 < self.depth_decay <= 1:
            raise ValueError("depth_decay must be in (0,1]")
        if not 0 <= self.correct_prob <= 1:
            raise ValueError("correct_prob must be in [0,1]")


@dataclass(frozen=True)
class SyntheticConfig:
    n_tasks: int
    tree_size_range: tuple[int, int] = (6, 24)
    weight_model: tuple = ("uniform", 0.01, 0.2)
    label_model: LabelModel = LabelModel()
    miscalibration: float = 0.0
    m: int = 20
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_tasks < 2:
            raise ValueError(f"n_tasks must be >= 2, got {self.n_tasks}")
        lo, hi = self.tree_size_range
        if not 2 <= lo <= hi:
            raise ValueError(f"invalid tree_size_range {self.tree_size_range}")
        kind = self.weight_model[0]
        if kind == "uniform":
            if len(self.weight_model) != 3 or not 0 < self.weight_model[1] < self.weight_model[2]:
                raise ValueError(f"uniform weight model needs 0 < a < b, got {self.weight_model}")
        elif kind == "heavy-tail":
            if len(self.weight_model) != 2 or self.weight_model[1] <= 0:
                raise ValueError(f"heavy-tail weight model needs scale > 0, got {self.weight_model}")
        else:
            raise ValueError(f"weight_model kind must be one of {WEIGHT_MODELS}, got {kind!r}")
        if self.miscalibration < 0:
            raise ValueError("miscalibration must be >= 0")
        if self.m < 1:
            raise ValueError("m must be >= 1")


@dataclass(frozen=True)
class SyntheticSample:
    """One sampled variant: the tree, its true label, and its uncertainty."""

    tree: AnnotatedAst
    correct: bool
    score: float


@dataclass(frozen=True)
class SyntheticTask:
    record: CalibrationRecord  # labels = the truly correct samples
    samples: tuple[SyntheticSample, ...]
    lambda_star: float | None  # loss is 0 iff budget < lambda_star; None if miscalibrated


def _draw_weight(rng: np.random.Generator, model: tuple) -> float:
    if model[0] == "uniform":
        return float(rng.uniform(model[1], model[2]))
    return float(model[1] * rng.pareto(2.0))


def _random_tree(rng: np.random.Generator, n: int) -> list[list[int]]:
    """Random recursive tree: children lists indexed by position, 0 is root."""
    children: list[list[int]] = [[] for _ in range(n)]
    for v in range(1, n):
        children[int(rng.integers(0, v))].append(v)
    return children


def _replace_subtree_with_fix(ast: AnnotatedAst, target: int, task_id: str) -> AnnotatedAst:
    """A variant tree with subtree(target) collapsed into a single fix node."""
    dropped = set(ast.subtree_ids(target)) - {target}
    kept = [v for v in range(ast.n_nodes) if v not in dropped]
    new_id = {old: new for new, old in enumerate(kept)}
    nodes = []
    for old in kept:
        node = ast.nodes[old]
        if old == target:
            nodes.append(AstNode(id=new_id[old], label=FIX_LABEL, children=(), weight=0.0))
        else:
            nodes.append(
                AstNode(
                    id=new_id[old],
                    label=node.label,
                    children=tuple(new_id[c] for c in node.children),
                    weight=node.weight,
                )
            )
    return AnnotatedAst(task_id=task_id, root_id=new_id[ast.root_id], nodes=tuple(nodes))


def _generate_task(cfg: SyntheticConfig, rng: np.random.Generator, task_id: str) -> SyntheticTask:
    n = int(rng.integers(cfg.tree_size_range[0], cfg.tree_size_range[1] + 1))
    children = _random_tree(rng, n)

    leaves = [v for v in range(1, n) if not children[v]]
    wrong = int(rng.choice(leaves))
    # reindex: root -> 0, wrong leaf -> 1 so it wins removal-root id ties
    rest = [v for v in range(1, n) if v != wrong]
    new_id = {0: 0, wrong: 1, **{old: i + 2 for i, old in enumerate(rest)}}

    weights = [0.0] * n
    for v in range(n):
        weights[v] = _draw_weight(rng, cfg.weight_model)
    boost = math.fsum(weights) + 1.0

    # miscalibration relocates the dominating weight off the wrong leaf
    relocated = rng.random() < 1.0 - math.exp(-cfg.miscalibration) if cfg.miscalibration else False
    boost_at = int(rng.integers(1, n)) if relocated else wrong
    weights[boost_at] += boost

    labels_pool = list(_NODE_LABELS)
    nodes = [
        AstNode(
            id=new_id[v],
            label=labels_pool[int(rng.integers(0, len(labels_pool)))],
            children=tuple(sorted(new_id[c] for c in children[v])),
            weight=weights[v],
        )
        for v in range(n)
    ]
    nodes.sort(key=lambda node: node.id)
    ast = AnnotatedAst(task_id=task_id, root_id=0, nodes=tuple(nodes))

    # chain: root-to-wrong-leaf path, root excluded, shallow to deep
    chain = []
    parents = ast.parents()
    v = 1
    while v != ast.root_id:
        chain.append(v)
        v = parents[v]
    chain.reverse()
    k = len(chain)
    off_chain = [v for v in range(1, ast.n_nodes) if v not in set(chain)]

    depth_probs = np.array([cfg.label_model.depth_decay**j for j in range(1, k + 1)])
    depth_probs /= depth_probs.sum()

    samples = []
    deepest_fix = 0
    for s in range(cfg.m):
        correct = True if s == 0 else bool(rng.random() < cfg.label_model.correct_prob)
        if correct:
            j = int(rng.choice(k, p=depth_probs)) + 1
            deepest_fix = max(deepest_fix, j)
            tree = _replace_subtree_with_fix(ast, chain[j - 1], task_id)
            score = float(rng.uniform(0.0, 0.55))
        else:
            if off_chain:
                target = int(rng.choice(off_chain))
                tree = _replace_subtree_with_fix(ast, target, task_id)
            else:
                tree = ast
            score = float(rng.uniform(0.5, 1.0))
        samples.append(SyntheticSample(tree=tree, correct=correct, score=score))

    record = CalibrationRecord(
        task_id=task_id,
        generated=ast,
        labels=tuple(s.tree for s in samples if s.correct),
    )

    if relocated:
        lambda_star = None
    else:
        # loss is 0 iff required removal weight exceeds the heaviest chain
        # subtree strictly below the deepest fixed point
        w_sub = ast.subtree_weights()
        total = total_weight(ast)
        threshold = 0.0 if deepest_fix == k else w_sub[chain[deepest_fix]]
        lambda_star = total - threshold
    return SyntheticTask(record=record, samples=tuple(samples), lambda_star=lambda_star)


def generate_tasks(cfg: SyntheticConfig, seed: int | None = None) -> list[SyntheticTask]:
    base = cfg.seed if seed is None else seed
    return [
        _generate_task(cfg, np.random.default_rng(np.random.SeedSequence((base, i))), f"task-{i:05d}")
        for i in range(cfg.n_tasks)
    ]


def generate_synthetic_set(cfg: SyntheticConfig) -> list[CalibrationRecord]:
    """Deterministic i.i.d. records; labels are the truly correct variants."""
    return [task.record for task in generate_tasks(cfg)]


# -- trials ---------------------------------------------------------------------


@dataclass(frozen=True)
class TrialRow:
    trial: int
    alpha: float
    m: int
    epsilon: float | None
    target: float  # risk level the coverage indicator compares against
    lambda_hat: float | None
    test_risk: float | None
    removal_fraction: float | None
    coverage: int
    abstained: bool
    fraction_saved: float | None


@dataclass(frozen=True)
class TrialReport:
    rows: tuple[TrialRow, ...]


def _derived_seed(master: int, trial: int, stream: int) -> int:
    return int(np.random.SeedSequence((master, trial, stream)).generate_state(1, np.uint64)[0])


def _split_tasks(tasks, master: int, trial: int, split: float):
    rng = np.random.default_rng(np.random.SeedSequence((master, trial, _STREAM_SPLIT)))
    perm = rng.permutation(len(tasks))
    n_cal = int(len(tasks) * split)
    if not 0 < n_cal < len(tasks):
        raise ValueError(f"split {split} leaves an empty half for {len(tasks)} tasks")
    return [tasks[i] for i in perm[:n_cal]], [tasks[i] for i in perm[n_cal:]]


def _evaluate(result: CalibrationResult, test_records, ltt: LttConfig):
    """Test risk and mean removal fraction at the selected budget."""
    if result.lambda_hat is None:
        return None, None
    cfg = PruneConfig(lam=result.lambda_hat, t_max=ltt.t_max, time_limit_ms=ltt.time_limit_ms)
    summary = empirical_risk(test_records, cfg)
    return summary.risk, summary.mean_removal_fraction


def _row(trial, cfg, ltt, target, result, test_risk, removal, epsilon=None, saved=None):
    abstained = result.lambda_hat is None
    # an abstaining trial issues no set, so it cannot miss: coverage is vacuous
    coverage = 1 if abstained else int(test_risk <= target)
    return TrialRow(
        trial=trial,
        alpha=ltt.alpha,
        m=cfg.m,
        epsilon=epsilon,
        target=target,
        lambda_hat=result.lambda_hat,
        test_risk=test_risk,
        removal_fraction=removal,
        coverage=coverage,
        abstained=abstained,
        fraction_saved=saved,
    )


def run_trials(
    cfg: SyntheticConfig, ltt: LttConfig, n_trials: int, split: float = 0.5, jobs: int = 1
) -> TrialReport:
    """Fresh data, random split, calibrate, evaluate on the held-out half."""
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    rows = []
    for t in range(n_trials):
        tasks = generate_tasks(cfg, seed=_derived_seed(cfg.seed, t, _STREAM_DATA))
        cal, test = _split_tasks(tasks, cfg.seed, t, split)
        result = calibrate([task.record for task in cal], ltt, jobs=jobs)
        test_risk, removal = _evaluate(result, [task.record for task in test], ltt)
        rows.append(_row(t, cfg, ltt, ltt.alpha, result, test_risk, removal))
    return TrialReport(rows=tuple(rows))


def run_selective_trials(
    cfg: SyntheticConfig,
    sel: SelectiveConfig,
    ltt: LttConfig,
    n_trials: int,
    split: float = 0.5,
    jobs: int = 1,
) -> TrialReport:
    """Like run_trials, but calibration labels come from selective execution.

    All calibration-half samples are pooled into one selective run; a sample
    skipped as confidently correct joins the label set without its tests
    running. Test risk is measured against the true labels and compared to
    the inflated level alpha + epsilon*(1-alpha). With epsilon 0 this matches
    run_trials bit for bit on the same master seed.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    target = ltt.alpha + sel.epsilon * (1.0 - ltt.alpha)
    rows = []
    for t in range(n_trials):
        tasks = generate_tasks(cfg, seed=_derived_seed(cfg.seed, t, _STREAM_DATA))
        cal, test = _split_tasks(tasks, cfg.seed, t, split)

        pool = [(task_i, s) for task_i, task in enumerate(cal) for s in task.samples]
        programs = [(s.score, lambda s=s: int(s.correct)) for _, s in pool]
        trial_sel = replace(sel, seed=_derived_seed(cfg.seed, t, _STREAM_SELECT))
        outcome = run_selective_execution(programs, trial_sel, jobs=jobs)

        labeled: dict[int, list] = {i: [] for i in range(len(cal))}
        for (task_i, s), label in zip(pool, outcome.labels):
            if label == 1:
                labeled[task_i].append(s.tree)
        cal_records = [
            replace(task.record, labels=tuple(labeled[i])) for i, task in enumerate(cal)
        ]
        result = calibrate(cal_records, ltt, jobs=jobs)
        test_risk, removal = _evaluate(result, [task.record for task in test], ltt)
        rows.append(
            _row(
                t, cfg, ltt, target, result, test_risk, removal,
                epsilon=sel.epsilon, saved=outcome.fraction_saved,
            )
        )
    return TrialReport(rows=tuple(rows))


def run_alpha_sweep(
    cfg: SyntheticConfig, ltt: LttConfig, alphas, n_trials: int, split: float = 0.5
) -> TrialReport:
    rows = []
    for alpha in alphas:
        rows.extend(run_trials(cfg, replace(ltt, alpha=alpha), n_trials, split).rows)
    return TrialReport(rows=tuple(rows))


def run_m_sweep(
    cfg: SyntheticConfig, ltt: LttConfig, ms, n_trials: int, split: float = 0.5
) -> TrialReport:
    rows = []
    for m in ms:
        rows.extend(run_trials(replace(cfg, m=m), ltt, n_trials, split).rows)
    return TrialReport(rows=tuple(rows))


def run_epsilon_sweep(
    cfg: SyntheticConfig,
    sel: SelectiveConfig,
    ltt: LttConfig,
    epsilons,
    n_trials: int,
    split: float = 0.5,
) -> TrialReport:
    rows = []
    for eps in epsilons:
        rows.extend(run_selective_trials(cfg, replace(sel, epsilon=eps), ltt, n_trials, split).rows)
    return TrialReport(rows=tuple(rows))


# -- aggregation and reports -----------------------------------------------------


def aggregate_by_alpha(report: TrialReport) -> list[dict]:
    """Mean/SD of coverage and removal per alpha, ascending."""
    out = []
    for alpha in sorted({row.alpha for row in report.rows}):
        rows = [r for r in report.rows if r.alpha == alpha]
        cov = np.array([r.coverage for r in rows], dtype=float)
        rem = np.array(
            [r.removal_fraction for r in rows if r.removal_fraction is not None], dtype=float
        )
        out.append(
            {
                "alpha": alpha,
                "coverage_mean": float(cov.mean()),
                "coverage_sd": float(cov.std()),
                "removal_mean": float(rem.mean()) if rem.size else float("nan"),
                "removal_sd": float(rem.std()) if rem.size else float("nan"),
            }
        )
    return out


def report_to_obj(report: TrialReport) -> dict:
    rows = []
    for r in report.rows:
        rows.append(
            {
                "trial": r.trial,
                "alpha": r.alpha,
                "m": r.m,
                "epsilon": r.epsilon,
                "target": r.target,
                "lambda_hat": r.lambda_hat,
                "test_risk": r.test_risk,
                "removal_fraction": r.removal_fraction,
                "coverage": r.coverage,
                "abstained": r.abstained,
                "fraction_saved": r.fraction_saved,
            }
        )
    return {"rows": rows, "aggregates": aggregate_by_alpha(report)}


def report_from_obj(obj) -> TrialReport:
    rows = tuple(
        TrialRow(
            trial=r["trial"],
            alpha=r["alpha"],
            m=r["m"],
            epsilon=r["epsilon"],
            target=r["target"],
            lambda_hat=r["lambda_hat"],
            test_risk=r["test_risk"],
            removal_fraction=r["removal_fraction"],
            coverage=r["coverage"],
            abstained=r["abstained"],
            fraction_saved=r["fraction_saved"],
        )
        for r in obj["rows"]
    )
    return TrialReport(rows=rows)


def report_to_csv(report: TrialReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["alpha", "coverage_mean", "coverage_sd", "removal_mean", "removal_sd"])
    for agg in aggregate_by_alpha(report):
        writer.writerow(
            [
                f"{agg['alpha']:.6g}",
                f"{agg['coverage_mean']:.6f}",
                f"{agg['coverage_sd']:.6f}",
                f"{agg['removal_mean']:.6f}",
                f"{agg['removal_sd']:.6f}",
            ]
        )
    return buf.getvalue()


def _svg_panel(parts, aggs, y_key, sd_key, x0, y0, w, h, title, targets=None):
    xs = [a["alpha"] for a in aggs]
    lo, hi = min(xs), max(xs)
    span = hi - lo if hi > lo else 1.0
    ys = [a[y_key] for a in aggs]
    sds = [a[sd_key] for a in aggs]
    y_max = max(1.0, max(y + s for y, s in zip(ys, sds)))

    def px(x):
        return x0 + (x - lo) / span * w

    def py(y):
        return y0 + h - max(0.0, min(y, y_max)) / y_max * h

    def pts(seq):
        return " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in seq)

    band = list(zip(xs, (y + s for y, s in zip(ys, sds)))) + list(
        zip(reversed(xs), reversed([y - s for y, s in zip(ys, sds)]))
    )
    parts.append(f'<polygon points="{pts(band)}" fill="#88aadd" fill-opacity="0.35"/>')
    parts.append(
        f'<polyline points="{pts(list(zip(xs, ys)))}" fill="none" stroke="#224488" stroke-width="2"/>'
    )
    if targets is not None:
        parts.append(
            f'<polyline points="{pts(list(zip(xs, targets)))}" fill="none" stroke="#aa2222" '
            'stroke-width="1.5" stroke-dasharray="6,4"/>'
        )
    parts.append(
        f'<rect x="{x0}" y="{y0}" width="{w}" height="{h}" fill="none" stroke="#333"/>'
    )
    parts.append(f'<text x="{x0}" y="{y0 - 6}" font-size="13" fill="#111">{title}</text>')
    for x in xs:
        parts.append(
            f'<text x="{px(x):.2f}" y="{y0 + h + 14}" font-size="10" fill="#111" '
            f'text-anchor="middle">{x:.6g}</text>'
        )


def report_to_svg(report: TrialReport) -> str:
    aggs = aggregate_by_alpha(report)
    parts = [
        '<svg xmlns="http://www.w3.org/2000/svg" width="640" height="520" viewBox="0 0 640 520">',
        '<rect width="640" height="520" fill="white"/>',
    ]
    _svg_panel(
        parts, aggs, "coverage_mean", "coverage_sd", 50, 30, 560, 180,
        "coverage vs alpha (band: 1 SD, dashed: 1-alpha target)",
        targets=[1.0 - a["alpha"] for a in aggs],
    )
    _svg_panel(
        parts, aggs, "removal_mean", "removal_sd", 50, 290, 560, 180,
        "mean removal fraction vs alpha (band: 1 SD)",
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_report(report: TrialReport, formats, out_dir, stem: str = "report") -> list[Path]:
    """Write the report in the requested formats; deterministic bytes."""
    if not report.rows:
        raise ValueError("no data")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for fmt in formats:
        path = out_dir / f"{stem}.{ 'svg' if fmt == 'svg-plot' else fmt }"
        if fmt == "json":
            path.write_text(json.dumps(report_to_obj(report), indent=2) + "\n")
        elif fmt == "csv":
            path.write_text(report_to_csv(report))
        elif fmt in ("svg", "svg-plot"):
            path.write_text(report_to_svg(report))
        else:
            raise ValueError(f"unknown report format {fmt!r}")
        written.append(path)
    return written
