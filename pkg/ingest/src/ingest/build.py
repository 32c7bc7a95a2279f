"""Assemble core calibration records from grouped raw samples.

Per task: the first non-reference sample is the program to prune, later
non-reference samples are label candidates, and the is_reference sample is
the trusted solution. The first m candidates are executed against the
task's tests; correct ones (deduplicated by source text) become labels, the
reference joins them when the flag is on, and the score is the generated
program's perplexity. Tasks whose program does not parse are skipped with
reason "syntax"; tasks that end up with zero labels are emitted flagged
excluded because the core schema requires non-empty labels.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from ingest.extract import IngestSyntaxError, extract_ast, perplexity_score
from ingest.raw import IngestInputError, RawSample
from ingest.sandbox import execute_tests


@dataclass(frozen=True)
class TaskBuild:
    """Outcome for one task: a record object, or why there is none."""

    task_id: str
    record: dict | None
    excluded: bool
    skip_reason: str | None
    n_candidates: int
    n_correct: int


@dataclass(frozen=True)
class _TaskGroup:
    task_id: str
    generated: RawSample | None
    reference: RawSample | None
    candidates: tuple[RawSample, ...]


def _group(samples) -> list[_TaskGroup]:
    order: list[str] = []
    by_task: dict[str, dict] = {}
    for sample in samples:
        slot = by_task.get(sample.task_id)
        if slot is None:
            slot = {"generated": None, "reference": None, "candidates": []}
            by_task[sample.task_id] = slot
            order.append(sample.task_id)
        if sample.is_reference:
            if slot["reference"] is not None:
                raise IngestInputError(f"task {sample.task_id!r}: multiple reference samples")
            slot["reference"] = sample
        elif slot["generated"] is None:
            slot["generated"] = sample
        else:
            slot["candidates"].append(sample)
    return [
        _TaskGroup(
            task_id=tid,
            generated=by_task[tid]["generated"],
            reference=by_task[tid]["reference"],
            candidates=tuple(by_task[tid]["candidates"]),
        )
        for tid in order
    ]


def _execute_one(job: tuple[RawSample, int]) -> int:
    sample, timeout_ms = job
    return execute_tests(sample, timeout_ms=timeout_ms)


def _verdicts(jobs: list[tuple[RawSample, int]], jobs_n: int) -> list[int]:
    if jobs_n <= 1 or len(jobs) <= 1:
        return [_execute_one(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=jobs_n) as pool:
        return list(pool.map(_execute_one, jobs))


def build_calibration_set(
    samples,
    m: int = 20,
    *,
    include_reference: bool = True,
    timeout_ms: int = 5000,
    jobs: int = 1,
) -> list[TaskBuild]:
    """One TaskBuild per task, in first-seen task order.

    Verdict order is independent of worker scheduling: executions are keyed
    by position, so results are byte-identical for any jobs count.
    """
    if m < 0:
        raise IngestInputError(f"m must be >= 0, got {m}")
    if jobs < 1:
        raise IngestInputError(f"jobs must be >= 1, got {jobs}")
    groups = _group(samples)

    pending: list[tuple[RawSample, int]] = []
    slots: list[list[int]] = []
    for group in groups:
        chosen = group.candidates[:m]
        slots.append(list(range(len(pending), len(pending) + len(chosen))))
        pending.extend((candidate, timeout_ms) for candidate in chosen)
    verdicts = _verdicts(pending, jobs)

    builds = []
    for group, slot in zip(groups, slots):
        if group.generated is None:
            builds.append(
                TaskBuild(group.task_id, None, False, "no-generated", len(slot), 0)
            )
            continue
        try:
            generated_ast = extract_ast(group.generated)
        except IngestSyntaxError:
            builds.append(TaskBuild(group.task_id, None, False, "syntax", len(slot), 0))
            continue
        score = perplexity_score(group.generated)

        correct = [group.candidates[:m][i] for i, k in enumerate(slot) if verdicts[k] == 1]
        seen: set[str] = set()
        labels = []
        for sample in correct:
            if sample.source_text not in seen:
                seen.add(sample.source_text)
                labels.append(extract_ast(sample))
        if include_reference and group.reference is not None:
            if group.reference.source_text not in seen:
                labels.append(extract_ast(group.reference))

        record = {
            "task_id": group.task_id,
            "generated": generated_ast,
            "labels": labels,
            "score": score,
        }
        builds.append(
            TaskBuild(group.task_id, record, not labels, None, len(slot), len(correct))
        )
    return builds


def write_records_file(builds, path) -> int:
    """Write included records as compact JSON lines; returns the count."""
    written = 0
    with open(path, "w", encoding="utf-8") as fh:
        for build in builds:
            if build.record is None or build.excluded:
                continue
            fh.write(json.dumps(build.record, separators=(",", ":")) + "\n")
            written += 1
    return written
