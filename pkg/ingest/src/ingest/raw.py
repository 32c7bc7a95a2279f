"""Raw benchmark samples: one model generation plus its task context.

A RawSample carries the program text, the per-token log-probabilities that
produced it, and the task's test snippets. Tokens must concatenate exactly
to the source text (detokenization here is plain concatenation; tokenizers
that rewrite bytes must be undone upstream). Reference solutions travel in
the same shape with is_reference set.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

# log-probabilities are <= 0 up to float fuzz from the producing runtime
_LOGPROB_SLACK = 1e-6


class IngestInputError(ValueError):
    """Input violates the raw-sample schema; message names the field."""


@dataclass(frozen=True)
class RawSample:
    """One sampled program: text, aligned token log-probs, tests, role flag."""

    task_id: str
    source_text: str
    tokens: tuple[tuple[str, float], ...]
    tests: tuple[str, ...]
    is_reference: bool = False


_TOP_KEYS = {"task_id", "source_text", "tokens", "tests", "is_reference"}
_REQUIRED_KEYS = _TOP_KEYS - {"is_reference"}


def raw_sample_from_obj(obj) -> RawSample:
    """Build a RawSample from an already-decoded JSON object."""
    if not isinstance(obj, dict):
        raise IngestInputError(f"sample: expected object, got {type(obj).__name__}")
    unknown = set(obj) - _TOP_KEYS
    if unknown:
        raise IngestInputError(f"sample: unknown field {sorted(unknown)[0]!r}")
    missing = _REQUIRED_KEYS - set(obj)
    if missing:
        raise IngestInputError(f"sample: missing field {sorted(missing)[0]!r}")
    if not isinstance(obj["task_id"], str) or not obj["task_id"]:
        raise IngestInputError("sample.task_id: expected non-empty string")
    if not isinstance(obj["source_text"], str):
        raise IngestInputError("sample.source_text: expected string")
    if not isinstance(obj["tokens"], list):
        raise IngestInputError("sample.tokens: expected array")
    tokens = []
    for k, pair in enumerate(obj["tokens"]):
        where = f"sample.tokens[{k}]"
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise IngestInputError(f"{where}: expected [text, logprob] pair")
        text, logprob = pair
        if not isinstance(text, str):
            raise IngestInputError(f"{where}: token text must be a string")
        if isinstance(logprob, bool) or not isinstance(logprob, (int, float)):
            raise IngestInputError(f"{where}: logprob must be a number")
        if logprob != logprob or logprob > _LOGPROB_SLACK:
            raise IngestInputError(f"{where}: logprob must be <= 0, got {logprob}")
        tokens.append((text, float(logprob)))
    if not isinstance(obj["tests"], list) or not all(isinstance(t, str) for t in obj["tests"]):
        raise IngestInputError("sample.tests: expected array of strings")
    is_reference = obj.get("is_reference", False)
    if not isinstance(is_reference, bool):
        raise IngestInputError("sample.is_reference: expected boolean")
    return RawSample(
        task_id=obj["task_id"],
        source_text=obj["source_text"],
        tokens=tuple(tokens),
        tests=tuple(obj["tests"]),
        is_reference=is_reference,
    )


def read_raw_samples(path) -> list[RawSample]:
    """Parse a JSON-lines raw-sample file; errors carry the line number."""
    samples = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                samples.append(raw_sample_from_obj(json.loads(line)))
            except (json.JSONDecodeError, ValueError) as exc:
                raise IngestInputError(f"line {lineno}: {exc}") from exc
    return samples
