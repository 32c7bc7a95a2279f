"""Python source to weighted AST extraction, plus perplexity scoring.

Grammar nodes come from the stdlib parser. Every token charges its negative
log-probability to the deepest grammar node whose source span fully covers
the token, so code tokens land on the expression that spells them while
whitespace and comments between statements land on the nearest enclosing
statement (ultimately the module root, which also absorbs zero-length
tokens). All span arithmetic runs in utf-8 bytes because the parser reports
byte columns.

Grammar nodes with no source extent anywhere below them (expression-context
markers, empty argument lists) are omitted from the output tree; they can
never carry weight and the core only needs the weighted shape.
"""

from __future__ import annotations

import ast as pyast
import json
import math

from ingest.raw import IngestInputError, RawSample


class IngestSyntaxError(ValueError):
    """The sample's source text does not parse; the record should be skipped."""

    reason = "syntax"


class IngestAlignmentError(ValueError):
    """Tokens do not concatenate to the source text; message lists the spans."""


def _nll(logprob: float) -> float:
    # producing runtimes emit tiny positive logprobs from float error; clamp
    return max(0.0, -logprob)


# -- token spans -------------------------------------------------------------


def _token_spans(sample: RawSample, source: bytes) -> list[tuple[int, int, float]]:
    """Byte span and weight per token; verifies exact concatenation."""
    spans = []
    offset = 0
    for k, (text, logprob) in enumerate(sample.tokens):
        piece = text.encode("utf-8")
        end = offset + len(piece)
        if source[offset:end] != piece:
            raise IngestAlignmentError(
                f"task {sample.task_id!r}: token {k} {text!r} does not match source "
                f"bytes [{offset}, {end}); unassigned spans: [{offset}, {len(source)})"
            )
        spans.append((offset, end, _nll(logprob)))
        offset = end
    if offset != len(source):
        raise IngestAlignmentError(
            f"task {sample.task_id!r}: tokens cover bytes [0, {offset}) only; "
            f"unassigned spans: [{offset}, {len(source)})"
        )
    return spans


# -- grammar spans -----------------------------------------------------------


def _line_starts(source: bytes) -> list[int]:
    starts = [0]
    for i, byte in enumerate(source):
        if byte == 0x0A:
            starts.append(i + 1)
    return starts


def _own_span(node, starts: list[int]) -> tuple[int, int] | None:
    lineno = getattr(node, "lineno", None)
    end_lineno = getattr(node, "end_lineno", None)
    col = getattr(node, "col_offset", None)
    end_col = getattr(node, "end_col_offset", None)
    if None in (lineno, end_lineno, col, end_col):
        return None
    return (starts[lineno - 1] + col, starts[end_lineno - 1] + end_col)


class _Grammar:
    """Kept grammar nodes of one parse: spans, children, dense preorder ids."""

    def __init__(self, tree: pyast.Module, source: bytes):
        starts = _line_starts(source)
        self.span: dict[pyast.AST, tuple[int, int]] = {}
        self.kept_children: dict[pyast.AST, list[pyast.AST]] = {}
        self._collect(tree, starts)
        # the module covers the whole file so stray bytes always have a home
        self.span[tree] = (0, len(source))
        self.root = tree
        self.order: list[pyast.AST] = []
        self._number(tree)
        self.index = {node: i for i, node in enumerate(self.order)}

    def _collect(self, node, starts) -> bool:
        kept = []
        lo, hi = None, None
        for child in pyast.iter_child_nodes(node):
            if self._collect(child, starts):
                kept.append(child)
                s, e = self.span[child]
                lo = s if lo is None else min(lo, s)
                hi = e if hi is None else max(hi, e)
        own = _own_span(node, starts)
        if own is not None:
            lo = own[0] if lo is None else min(lo, own[0])
            hi = own[1] if hi is None else max(hi, own[1])
        if lo is None:
            return False
        self.span[node] = (lo, hi)
        self.kept_children[node] = kept
        return True

    def _number(self, node) -> None:
        self.order.append(node)
        for child in self.kept_children.get(node, ()):
            self._number(child)

    def deepest_covering(self, s: int, e: int) -> pyast.AST:
        node = self.root
        while True:
            step = None
            for child in self.kept_children.get(node, ()):
                cs, ce = self.span[child]
                if cs <= s and e <= ce:
                    step = child
                    break
            if step is None:
                return node
            node = step


# -- operations --------------------------------------------------------------


def extract_ast(sample: RawSample) -> dict:
    """Weighted AST of one sample, as a core-schema JSON object.

    Raises IngestSyntaxError when the source does not parse (callers skip
    the record) and IngestAlignmentError when tokens do not concatenate to
    the source. Total node weight equals total token negative log-prob.
    """
    try:
        tree = pyast.parse(sample.source_text)
    except (SyntaxError, ValueError) as exc:
        raise IngestSyntaxError(f"task {sample.task_id!r}: {exc}") from exc
    source = sample.source_text.encode("utf-8")
    spans = _token_spans(sample, source)
    grammar = _Grammar(tree, source)

    charges: dict[int, list[float]] = {}
    for s, e, weight in spans:
        node = grammar.root if s == e else grammar.deepest_covering(s, e)
        charges.setdefault(grammar.index[node], []).append(weight)

    nodes = []
    for i, node in enumerate(grammar.order):
        children = [grammar.index[c] for c in grammar.kept_children.get(node, ())]
        weight = math.fsum(charges.get(i, ()))
        nodes.append(
            {"id": i, "label": type(node).__name__, "children": children, "weight": weight}
        )
    return {"task_id": sample.task_id, "root": 0, "nodes": nodes}


def perplexity_score(sample: RawSample) -> float:
    """exp of the mean token negative log-prob; the core's uncertainty score."""
    if not sample.tokens:
        raise IngestInputError(f"task {sample.task_id!r}: perplexity needs at least one token")
    total = math.fsum(_nll(lp) for _, lp in sample.tokens)
    return math.exp(total / len(sample.tokens))


def serialize_ast_obj(obj: dict) -> str:
    """Compact single-line JSON matching the core's writer byte for byte."""
    return json.dumps(obj, separators=(",", ":"))
