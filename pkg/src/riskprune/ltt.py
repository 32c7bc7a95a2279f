"""Learn-then-test calibration over a budget grid.

For every budget on an ascending grid, the empirical structured risk is
converted into a super-uniform binomial-tail p-value for the null hypothesis
"true risk > alpha". A family-wise-error-rate procedure at level delta keeps
the budgets whose nulls are rejected; every surviving budget is
risk-controlling simultaneously, so the selection takes the largest one
(fewest removals). An empty survivor set is an abstention.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .ast_model import AnnotatedAst, total_weight
from .pruner import PruneConfig, prune_exact
from .risk_eval import PartialProgram, sweep_record_losses

FWER_METHODS = ("bonferroni", "holm", "fst")


@dataclass(frozen=True)
class LambdaGrid:
    """Strictly increasing nonnegative budgets."""

    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.values:
            raise ValueError("grid must be non-empty")
        if self.values[0] < 0:
            raise ValueError("grid values must be >= 0")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ValueError("grid values must be strictly increasing")


def build_default_grid(records, step: float = 0.02) -> LambdaGrid:
    """0 to the maximum observed total weight, in `step` increments.

    The last point is rounded up to a step multiple so the empty removal is
    always on the grid.
    """
    if step <= 0:
        raise ValueError("grid step must be positive")
    top = max(total_weight(rec.generated) for rec in records)
    n_steps = max(1, math.ceil(top / step))
    return LambdaGrid(tuple(k * step for k in range(n_steps + 1)))


@dataclass(frozen=True)
class LttConfig:
    alpha: float = 0.1
    delta: float = 0.1
    t_max: int = 1
    fwer: str = "fst"
    fst_starts: int = 10
    grid: LambdaGrid | None = None
    grid_step: float = 0.02
    time_limit_ms: int | None = None

    def __post_init__(self) -> None:
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must be in (0,1), got {self.alpha}")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must be in (0,1), got {self.delta}")
        if self.t_max < 1:
            raise ValueError("t_max must be >= 1")
        if self.fwer not in FWER_METHODS:
            raise ValueError(f"fwer must be one of {FWER_METHODS}, got {self.fwer!r}")
        if self.fst_starts < 1:
            raise ValueError("fst_starts must be >= 1")


@dataclass(frozen=True)
class CalibrationResult:
    """Per-budget p-values and risks, the surviving budgets, and the selection."""

    grid: tuple[float, ...]
    pvalues: tuple[float, ...]
    valid: tuple[float, ...]
    lambda_hat: float | None  # None means abstention
    risk: tuple[float, ...]
    removal: tuple[float, ...]  # mean removal fraction per budget


# -- p-values ----------------------------------------------------------------


def binomial_tail_pvalue(n: int, alpha: float, risk_hat: float) -> float:
    """e times the exact Bin(n, alpha) CDF at n*risk_hat, clamped to <= 1.

    Super-uniform for the null "true risk > alpha". The CDF is summed term by
    term in log space; risk_hat must be a multiple of 1/n up to 1e-9.
    """
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool) or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must be in (0,1), got {alpha}")
    if not 0 <= risk_hat <= 1:
        raise ValueError(f"risk_hat must be in [0,1], got {risk_hat}")
    k = round(n * risk_hat)
    if abs(n * risk_hat - k) > 1e-9:
        raise ValueError(f"risk_hat={risk_hat} is not a multiple of 1/{n}")
    log_alpha = math.log(alpha)
    log_1m_alpha = math.log1p(-alpha)
    lg_n = math.lgamma(n + 1)
    terms = [
        lg_n - math.lgamma(i + 1) - math.lgamma(n - i + 1) + i * log_alpha + (n - i) * log_1m_alpha
        for i in range(k + 1)
    ]
    peak = max(terms)
    log_cdf = peak + math.log(math.fsum(math.exp(t - peak) for t in terms))
    return min(1.0, math.exp(1.0 + log_cdf))


# -- FWER procedures -----------------------------------------------------------
# Each returns the set of rejected indices into the ascending p-value vector.


def bonferroni(pvalues, delta: float) -> frozenset[int]:
    """Reject every hypothesis with p <= delta/N."""
    p = np.asarray(pvalues, dtype=float)
    return frozenset(np.flatnonzero(p <= delta / p.size).tolist())


def holm_bonferroni(pvalues, delta: float) -> frozenset[int]:
    """Step down through sorted p-values with thresholds delta/(N-k+1),
    stopping at the first failure."""
    p = np.asarray(pvalues, dtype=float)
    n = p.size
    order = np.argsort(p, kind="stable")
    accepted = []
    for pos, idx in enumerate(order):
        if p[idx] <= delta / (n - pos):
            accepted.append(int(idx))
        else:
            break
    return frozenset(accepted)


def fst_start_indices(n: int, starts: int) -> tuple[int, ...]:
    """Evenly spaced ascending start indices, anchored at the smallest budget."""
    count = min(starts, n)
    raw = np.rint(np.linspace(0, n - 1, count)).astype(int)
    return tuple(sorted(set(raw.tolist())))


def fixed_sequence(pvalues, delta: float, starts: int) -> frozenset[int]:
    """Fixed sequence testing from several start points.

    Budgets are ordered so that smaller ones are safer; from each start the
    walk accepts while p <= delta/|I| and moves toward larger budgets,
    stopping at the first failure.
    """
    p = np.asarray(pvalues, dtype=float)
    n = p.size
    if starts < 1:
        raise ValueError("starts must be >= 1")
    start_idx = fst_start_indices(n, starts)
    threshold = delta / len(start_idx)
    accepted: set[int] = set()
    for s in start_idx:
        if s in accepted:
            continue
        k = s
        while k < n and p[k] <= threshold:
            accepted.add(k)
            k += 1
    return frozenset(accepted)


def _apply_fwer(cfg: LttConfig, pvalues) -> frozenset[int]:
    if cfg.fwer == "bonferroni":
        return bonferroni(pvalues, cfg.delta)
    if cfg.fwer == "holm":
        return holm_bonferroni(pvalues, cfg.delta)
    return fixed_sequence(pvalues, cfg.delta, cfg.fst_starts)


# -- calibration ----------------------------------------------------------------


def _sweep_worker(args):
    record, grid_values, t_max, time_limit_ms = args
    return sweep_record_losses(record, grid_values, t_max, time_limit_ms)


def calibrate(records, cfg: LttConfig, jobs: int = 1) -> CalibrationResult:
    """Full calibration pass; a pure function of (records, cfg)."""
    records = list(records)
    if not records:
        raise ValueError("records must be non-empty")
    grid = cfg.grid if cfg.grid is not None else build_default_grid(records, cfg.grid_step)
    values = grid.values
    n = len(records)

    if jobs > 1:
        work = [(rec, values, cfg.t_max, cfg.time_limit_ms) for rec in records]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_worker, work, chunksize=max(1, n // (4 * jobs))))
    else:
        results = [
            sweep_record_losses(rec, values, cfg.t_max, cfg.time_limit_ms) for rec in records
        ]

    loss_matrix = np.array([losses for losses, _ in results], dtype=float)
    frac_matrix = np.array(
        [[c / rec.generated.n_nodes for c in counts] for rec, (_, counts) in zip(records, results)],
        dtype=float,
    )
    risks = loss_matrix.mean(axis=0)
    removal = frac_matrix.mean(axis=0)
    # snap to exact multiples of 1/n before the CDF (float accumulation guard)
    snapped = np.rint(risks * n) / n
    pvalues = tuple(binomial_tail_pvalue(n, cfg.alpha, r) for r in snapped)
    valid_idx = sorted(_apply_fwer(cfg, pvalues))
    valid = tuple(values[i] for i in valid_idx)
    lambda_hat = valid[-1] if valid else None
    return CalibrationResult(
        grid=tuple(values),
        pvalues=pvalues,
        valid=valid,
        lambda_hat=lambda_hat,
        risk=tuple(float(r) for r in snapped),
        removal=tuple(float(f) for f in removal),
    )


def predict(
    ast: AnnotatedAst,
    result: CalibrationResult,
    t_max: int,
    time_limit_ms: int | None = None,
) -> PartialProgram | None:
    """Prune a fresh AST at the selected budget; None passes abstention through."""
    if result.lambda_hat is None:
        return None
    cfg = PruneConfig(lam=result.lambda_hat, t_max=t_max, time_limit_ms=time_limit_ms)
    return PartialProgram(ast, prune_exact(ast, cfg))


# -- JSON ------------------------------------------------------------------------


def result_to_obj(result: CalibrationResult) -> dict:
    return {
        "grid": list(result.grid),
        "pvalues": list(result.pvalues),
        "valid": list(result.valid),
        "lambda_hat": result.lambda_hat,
        "risk": list(result.risk),
        "removal": list(result.removal),
    }


def result_from_obj(obj) -> CalibrationResult:
    keys = {"grid", "pvalues", "valid", "lambda_hat", "risk", "removal"}
    if not isinstance(obj, dict) or set(obj) != keys:
        raise ValueError(f"calibration result JSON must have exactly the fields {sorted(keys)}")
    return CalibrationResult(
        grid=tuple(obj["grid"]),
        pvalues=tuple(obj["pvalues"]),
        valid=tuple(obj["valid"]),
        lambda_hat=obj["lambda_hat"],
        risk=tuple(obj["risk"]),
        removal=tuple(obj["removal"]),
    )


def result_to_json(result: CalibrationResult) -> str:
    return json.dumps(result_to_obj(result), separators=(",", ":"))


def result_from_json(data: str | bytes) -> CalibrationResult:
    return result_from_obj(json.loads(data))
