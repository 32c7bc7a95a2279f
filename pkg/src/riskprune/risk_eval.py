"""Prediction-set membership and empirical structured risk.

A pruned AST denotes the set of all programs that extend it. A candidate
program belongs to that set when every retained node has a positionally
identical node (same NodePath) in the candidate; matching paths imply
matching edges. The structured loss of a calibration record is the indicator
that none of its label programs belongs to the set, and the empirical risk
is the mean of that loss over records.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .ast_model import (
    AnnotatedAst,
    AstParseError,
    ast_from_obj,
    ast_to_obj,
    canonical_serialization,
    node_path,
)
from .pruner import PruneConfig, PruneTimeoutError, RemovalSet, check_consistent, prune_exact


class RecordParseError(ValueError):
    """A calibration record line failed to parse or validate."""


@dataclass(frozen=True)
class PartialProgram:
    """An AST together with a downward-closed removal; the retained part is
    top-closed (it contains the root, or is empty)."""

    base: AnnotatedAst
    removal: RemovalSet

    def __post_init__(self) -> None:
        check_consistent(self.base, self.removal)
        removed = self.removal.removed
        if self.base.root_id in removed and len(removed) != self.base.n_nodes:
            raise ValueError("removal of the root must remove every node")

    def retained_ids(self) -> tuple[int, ...]:
        return tuple(v for v in range(self.base.n_nodes) if v not in self.removal.removed)


@dataclass(frozen=True)
class CalibrationRecord:
    """One task: generated AST, non-empty deduplicated label set, optional score."""

    task_id: str
    generated: AnnotatedAst
    labels: tuple[AnnotatedAst, ...]
    score: float | None = None
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.labels:
            raise ValueError(f"task {self.task_id!r}: labels must be non-empty")
        deduped = dedup_labels(self.labels)
        if len(deduped) != len(self.labels):
            object.__setattr__(self, "labels", deduped)
        if self.score is not None and not (math.isfinite(self.score) and self.score >= 0):
            raise ValueError(f"task {self.task_id!r}: score must be finite and >= 0")


def dedup_labels(labels) -> tuple[AnnotatedAst, ...]:
    """Drop label trees with duplicate shape+labels, keeping first occurrences."""
    seen: set[str] = set()
    out = []
    for y in labels:
        key = canonical_serialization(y)
        if key not in seen:
            seen.add(key)
            out.append(y)
    return tuple(out)


def _path_keys_by_id(ast: AnnotatedAst) -> tuple:
    return ast._memo(
        "path_keys_by_id",
        lambda: tuple(node_path(ast, v).key() for v in range(ast.n_nodes)),
    )


def contains(partial: PartialProgram, candidate: AnnotatedAst) -> bool:
    """True iff every retained node of partial occurs in candidate at the same
    NodePath. The empty partial contains every candidate."""
    keys = _path_keys_by_id(partial.base)
    candidate_keys = candidate.path_key_set()
    removed = partial.removal.removed
    return all(keys[v] in candidate_keys for v in range(partial.base.n_nodes) if v not in removed)


def set_loss(partial: PartialProgram, labels) -> int:
    """0 when some label belongs to the prediction set, else 1."""
    if not labels:
        raise ValueError("labels must be non-empty")
    return 0 if any(contains(partial, y) for y in labels) else 1


@dataclass(frozen=True)
class RiskSummary:
    risk: float
    losses: tuple[int, ...]
    mean_removal_fraction: float


def empirical_risk(records, cfg: PruneConfig, strategy=prune_exact) -> RiskSummary:
    """Mean structured loss over records, each pruned at cfg by the given solver."""
    records = list(records)
    if not records:
        raise ValueError("records must be non-empty")
    losses = []
    fractions = []
    for rec in records:
        try:
            removal = strategy(rec.generated, cfg)
        except PruneTimeoutError as exc:
            raise PruneTimeoutError(f"task {rec.task_id!r}: {exc}") from exc
        partial = PartialProgram(rec.generated, removal)
        losses.append(set_loss(partial, rec.labels))
        fractions.append(len(removal.removed) / rec.generated.n_nodes)
    return RiskSummary(
        risk=sum(losses) / len(losses),
        losses=tuple(losses),
        mean_removal_fraction=sum(fractions) / len(fractions),
    )


def sweep_record_losses(
    record: CalibrationRecord,
    grid,
    t_max: int,
    time_limit_ms: int | None = None,
    strategy=prune_exact,
) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """(loss, removal count) per grid budget for one record.

    Distinct budgets often share the same optimal removal, so losses are cached
    by removal set; label path sets are built once.
    """

    label_keys = record._cache.get("label_keys")
    if label_keys is None:
        label_keys = tuple(y.path_key_set() for y in record.labels)
        record._cache["label_keys"] = label_keys
    base = record.generated
    keys = _path_keys_by_id(base)
    n = base.n_nodes
    loss_cache: dict[frozenset, int] = {}
    losses = []
    counts = []
    for lam in grid:
        try:
            removal = strategy(base, PruneConfig(lam=lam, t_max=t_max, time_limit_ms=time_limit_ms))
        except PruneTimeoutError as exc:
            raise PruneTimeoutError(f"task {record.task_id!r}: {exc}") from exc
        removed = removal.removed
        loss = loss_cache.get(removed)
        if loss is None:
            retained_keys = [keys[v] for v in range(n) if v not in removed]
            loss = 0 if any(all(k in lk for k in retained_keys) for lk in label_keys) else 1
            loss_cache[removed] = loss
        losses.append(loss)
        counts.append(len(removed))
    return tuple(losses), tuple(counts)


# -- JSON-lines IO -----------------------------------------------------------

_RECORD_KEYS = {"task_id", "generated", "labels", "score"}


def record_from_obj(obj) -> CalibrationRecord:
    if not isinstance(obj, dict):
        raise RecordParseError(f"record: expected object, got {type(obj).__name__}")
    unknown = set(obj) - _RECORD_KEYS
    if unknown:
        raise RecordParseError(f"record: unknown field {sorted(unknown)[0]!r}")
    missing = _RECORD_KEYS - set(obj)
    if missing:
        raise RecordParseError(f"record: missing field {sorted(missing)[0]!r}")
    if not isinstance(obj["task_id"], str):
        raise RecordParseError("record.task_id: expected string")
    if not isinstance(obj["labels"], list) or not obj["labels"]:
        raise RecordParseError("record.labels: expected non-empty array")
    score = obj["score"]
    if score is not None and (isinstance(score, bool) or not isinstance(score, (int, float))):
        raise RecordParseError("record.score: expected number or null")
    try:
        generated = ast_from_obj(obj["generated"])
        labels = tuple(ast_from_obj(y) for y in obj["labels"])
    except (AstParseError, ValueError) as exc:
        raise RecordParseError(f"record {obj['task_id']!r}: {exc}") from exc
    return CalibrationRecord(
        task_id=obj["task_id"],
        generated=generated,
        labels=labels,
        score=None if score is None else float(score),
    )


def record_to_obj(record: CalibrationRecord) -> dict:
    return {
        "task_id": record.task_id,
        "generated": ast_to_obj(record.generated),
        "labels": [ast_to_obj(y) for y in record.labels],
        "score": record.score,
    }


def read_records(path) -> list[CalibrationRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(record_from_obj(json.loads(line)))
            except (json.JSONDecodeError, ValueError) as exc:
                raise RecordParseError(f"line {lineno}: {exc}") from exc
    return records


def write_records(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(record_to_obj(rec), separators=(",", ":")) + "\n")
