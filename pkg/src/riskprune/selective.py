"""Selective test execution with a calibrated uncertainty threshold.

Programs whose uncertainty score falls below a threshold u_hat are labeled
correct without running their tests. The skipped-label error rate is bounded
by epsilon at confidence 1-gamma via an importance-weighted estimate built
from h random draws: draw j samples a program index uniformly, flips a
Bernoulli(omega_i) coin, and on success executes that program's tests once.
Higher scores mean more uncertainty.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

BOUND_KINDS = ("hoeffding", "clt")

# u_hat sentinel: no threshold qualified, execute every program
EXEC_ALL = float("-inf")


class ExecutorError(RuntimeError):
    """Raised when a program's executor fails or returns a non-binary value."""

    def __init__(self, index: int, message: str) -> None:
        super().__init__(f"executor failed for program {index}: {message}")
        self.index = index


@dataclass(frozen=True)
class SelectiveConfig:
    epsilon: float
    gamma: float
    h: int
    bound: str = "hoeffding"
    seed: int = 0
    weights: tuple[float, ...] | None = None  # None means omega = 1 everywhere

    def __post_init__(self) -> None:
        # epsilon 0 is allowed and means exhaustive verification
        if not 0 <= self.epsilon < 1:
            raise ValueError(f"epsilon must be in [0,1), got {self.epsilon}")
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must be in (0,1), got {self.gamma}")
        if not isinstance(self.h, int) or isinstance(self.h, bool) or self.h < 1:
            raise ValueError(f"h must be a positive integer, got {self.h!r}")
        if self.bound not in BOUND_KINDS:
            raise ValueError(f"bound must be one of {BOUND_KINDS}, got {self.bound!r}")
        if self.weights is not None:
            if not self.weights:
                raise ValueError("weights must be non-empty when given")
            if any(not 0 < w <= 1 for w in self.weights):
                raise ValueError("weights must lie in (0,1]")

    def omega_min(self) -> float:
        return 1.0 if self.weights is None else min(self.weights)


@dataclass(frozen=True)
class SelectiveSample:
    """One draw: sampled index, its score, the coin, and the estimate term."""

    j: int
    index: int
    u: float
    weight: float
    xi: bool
    executed_loss: int | None  # 1 - S when the coin came up, else None
    z: float  # loss/weight when xi else 0; the u-indicator is applied later


@dataclass(frozen=True)
class SelectiveOutcome:
    u_hat: float  # EXEC_ALL when nothing qualified
    labels: tuple[int, ...]
    executed: tuple[int, ...]  # sorted indices whose tests actually ran
    bound_curve: tuple[tuple[float, float], ...]
    fraction_saved: float


def hoeffding_delta(h: int, gamma: float, omega_min: float) -> float:
    """sqrt(ln(2/gamma) / 2h) / omega_min."""
    if h < 1:
        raise ValueError("h must be >= 1")
    if not 0 < gamma < 1:
        raise ValueError("gamma must be in (0,1)")
    if not 0 < omega_min <= 1:
        raise ValueError("omega_min must be in (0,1]")
    return math.sqrt(math.log(2.0 / gamma) / (2.0 * h)) / omega_min


def error_upper_bound(samples, u: float, cfg: SelectiveConfig) -> float:
    """Upper confidence bound on the skipped-label error at threshold u.

    hoeffding: mean of z*1{U<=u} plus the fixed deviation term.
    clt: mean plus the one-sided normal quantile times sigma_hat/sqrt(h),
    sigma_hat with divisor h.
    """
    samples = list(samples)
    n = len(samples)
    if n < 1:
        raise ValueError("samples must be non-empty")
    z_eff = np.array([s.z if s.u <= u else 0.0 for s in samples])
    mean = float(z_eff.mean())
    if cfg.bound == "hoeffding":
        return mean + hoeffding_delta(n, cfg.gamma, cfg.omega_min())
    if n < 2:
        raise ValueError("clt bound needs at least 2 samples")
    sigma = float(z_eff.std())
    return mean + float(norm.ppf(1.0 - cfg.gamma)) * sigma / math.sqrt(n)


def select_threshold(samples, candidate_thresholds, cfg: SelectiveConfig) -> float:
    """Largest candidate whose bound is <= epsilon, else EXEC_ALL."""
    for u in sorted(candidate_thresholds, reverse=True):
        if error_upper_bound(samples, u, cfg) <= cfg.epsilon:
            return float(u)
    return EXEC_ALL


def run_selective_execution(programs, cfg: SelectiveConfig, jobs: int = 1) -> SelectiveOutcome:
    """Draw, bound, select, and label.

    `programs` is a sequence of (score, executor) pairs; each executor is a
    zero-argument callable returning S in {0,1} deterministically. Draws are
    sequential and consume the generator in a fixed order (index, then coin);
    each program's tests run at most once, cached across both phases.
    """
    programs = list(programs)
    m = len(programs)
    if m < 1:
        raise ValueError("programs must be non-empty")
    scores = [float(u) for u, _ in programs]
    weights = cfg.weights if cfg.weights is not None else (1.0,) * m
    if len(weights) != m:
        raise ValueError(f"got {len(weights)} weights for {m} programs")

    results: dict[int, int] = {}

    def execute(i: int) -> int:
        if i not in results:
            try:
                s = programs[i][1]()
            except Exception as exc:
                raise ExecutorError(i, str(exc)) from exc
            if s not in (0, 1):
                raise ExecutorError(i, f"expected 0 or 1, got {s!r}")
            results[i] = int(s)
        return results[i]

    rng = np.random.default_rng(cfg.seed)
    samples = []
    for j in range(cfg.h):
        i = int(rng.integers(0, m))
        xi = bool(rng.random() < weights[i])
        loss = 1 - execute(i) if xi else None
        z = loss / weights[i] if xi else 0.0
        samples.append(
            SelectiveSample(
                j=j, index=i, u=scores[i], weight=weights[i], xi=xi, executed_loss=loss, z=z
            )
        )

    candidates = sorted(set(scores))
    curve = tuple((u, error_upper_bound(samples, u, cfg)) for u in candidates)
    # epsilon 0 disables skipping outright: exhaustive verification regardless
    # of the curve, so the exact guarantee is recovered
    u_hat = EXEC_ALL if cfg.epsilon == 0 else select_threshold(samples, candidates, cfg)

    to_run = [i for i in range(m) if scores[i] >= u_hat and i not in results]
    if jobs > 1 and to_run:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(execute, to_run))
    else:
        for i in to_run:
            execute(i)

    labels = tuple(1 if scores[i] < u_hat else results[i] for i in range(m))
    saved = sum(1 for u in scores if u < u_hat)
    return SelectiveOutcome(
        u_hat=u_hat,
        labels=labels,
        executed=tuple(sorted(results)),
        bound_curve=curve,
        fraction_saved=saved / m,
    )


# -- JSON ---------------------------------------------------------------------


def outcome_to_obj(outcome: SelectiveOutcome) -> dict:
    return {
        "u_hat": "exec_all" if outcome.u_hat == EXEC_ALL else outcome.u_hat,
        "labels": list(outcome.labels),
        "executed": list(outcome.executed),
        "fraction_saved": outcome.fraction_saved,
        "bound": [[u, b] for u, b in outcome.bound_curve],
    }


def outcome_from_obj(obj) -> SelectiveOutcome:
    keys = {"u_hat", "labels", "executed", "fraction_saved", "bound"}
    if not isinstance(obj, dict) or set(obj) != keys:
        raise ValueError(f"selective outcome JSON must have exactly the fields {sorted(keys)}")
    u_hat = obj["u_hat"]
    if u_hat == "exec_all":
        u_hat = EXEC_ALL
    return SelectiveOutcome(
        u_hat=float(u_hat),
        labels=tuple(obj["labels"]),
        executed=tuple(obj["executed"]),
        bound_curve=tuple((u, b) for u, b in obj["bound"]),
        fraction_saved=float(obj["fraction_saved"]),
    )


def outcome_to_json(outcome: SelectiveOutcome) -> str:
    return json.dumps(outcome_to_obj(outcome), separators=(",", ":"))


def outcome_from_json(data: str | bytes) -> SelectiveOutcome:
    return outcome_from_obj(json.loads(data))
