import json

import numpy as np
import pytest

from riskprune.pruner import PruneConfig, make_removal, prune_exact
from riskprune.risk_eval import (
    CalibrationRecord,
    PartialProgram,
    RecordParseError,
    contains,
    dedup_labels,
    empirical_risk,
    read_records,
    record_from_obj,
    record_to_obj,
    set_loss,
    sweep_record_losses,
    write_records,
)

from .conftest import build_ast, random_ast


def _partial(ast, removed):
    return PartialProgram(base=ast, removal=make_removal(ast, removed))


def test_contains_after_removing_sibling(tiny):
    partial = _partial(tiny, {1})  # drop B; keep A, C, D
    with_extra = build_ast("cand", ("A", 0.0, [("E", 0.0, []), ("C", 0.0, [("D", 0.0, [])])]))
    assert contains(partial, with_extra)
    # C sits at child position 0 here, but position 1 was retained
    shifted = build_ast("cand", ("A", 0.0, [("C", 0.0, [("D", 0.0, [])])]))
    assert not contains(partial, shifted)


def test_contains_requires_all_retained_paths(tiny):
    partial = _partial(tiny, set())
    assert contains(partial, tiny)
    missing_leaf = build_ast("cand", ("A", 0.0, [("B", 0.0, []), ("C", 0.0, [])]))
    assert not contains(partial, missing_leaf)


def test_full_removal_contains_everything(tiny):
    partial = _partial(tiny, {0, 1, 2, 3})
    anything = build_ast("cand", ("Z", 0.0, []))
    assert contains(partial, anything)
    assert partial.retained_ids() == ()


def test_set_loss(tiny):
    partial = _partial(tiny, {1})
    good = build_ast("cand", ("A", 0.0, [("E", 0.0, []), ("C", 0.0, [("D", 0.0, [])])]))
    bad = build_ast("cand", ("Q", 0.0, []))
    assert set_loss(partial, [good, bad]) == 0
    assert set_loss(partial, [bad]) == 1
    with pytest.raises(ValueError, match="non-empty"):
        set_loss(partial, [])


def test_removal_monotone_containment():
    # removing more nodes can only make containment easier
    rng = np.random.default_rng(29)
    for _ in range(80):
        ast = random_ast(rng)
        candidate = random_ast(rng)
        small = prune_exact(ast, PruneConfig(lam=float(rng.uniform(0, 2.0)), t_max=2))
        grown = set(small.removed)
        parents = ast.parents()
        eligible = [
            v
            for v in range(ast.n_nodes)
            if v not in grown and all(c in grown for c in ast.nodes[v].children)
        ]
        if eligible:
            grown.add(int(rng.choice(eligible)))
        p_small = _partial(ast, small.removed)
        p_grown = _partial(ast, grown)
        if contains(p_small, candidate):
            assert contains(p_grown, candidate)
        del parents


def test_empirical_risk_third(tiny):
    # three records engineered to losses {0, 1, 0} at lam=1.9, t_max=1
    good = build_ast("cand", ("A", 0.0, [("E", 0.0, []), ("C", 0.0, [("D", 0.0, [])])]))
    bad = build_ast("cand", ("Q", 0.0, []))
    records = [
        CalibrationRecord(task_id="tiny", generated=tiny, labels=(good,)),
        CalibrationRecord(task_id="tiny", generated=tiny, labels=(bad,)),
        CalibrationRecord(task_id="tiny", generated=tiny, labels=(tiny,)),
    ]
    summary = empirical_risk(records, PruneConfig(lam=1.9, t_max=1))
    assert summary.losses == (0, 1, 0)
    assert summary.risk == pytest.approx(1 / 3)


def test_empty_labels_rejected(tiny):
    with pytest.raises(ValueError, match="non-empty"):
        CalibrationRecord(task_id="tiny", generated=tiny, labels=())


def test_dedup_labels(tiny):
    clone = build_ast("tiny", ("A", 0.1, [("B", 2.0, []), ("C", 0.3, [("D", 1.5, [])])]))
    labels = dedup_labels([tiny, clone, tiny])
    assert len(labels) == 1
    record = CalibrationRecord(task_id="tiny", generated=tiny, labels=(tiny, clone))
    assert len(record.labels) == 1


def test_sweep_matches_pointwise(tiny):
    good = build_ast("cand", ("A", 0.0, [("E", 0.0, []), ("C", 0.0, [("D", 0.0, [])])]))
    record = CalibrationRecord(task_id="tiny", generated=tiny, labels=(good,))
    grid = (0.0, 0.4, 1.0, 1.9, 3.9)
    losses, counts = sweep_record_losses(record, grid, t_max=1)
    for lam, loss, count in zip(grid, losses, counts):
        cfg = PruneConfig(lam=lam, t_max=1)
        summary = empirical_risk([record], cfg)
        assert summary.losses[0] == loss
        assert count == len(prune_exact(tiny, cfg).removed)


def test_record_json_roundtrip(tiny):
    record = CalibrationRecord(task_id="tiny", generated=tiny, labels=(tiny,), score=0.25)
    obj = record_to_obj(record)
    assert set(obj) == {"task_id", "generated", "labels", "score"}
    assert record_from_obj(obj) == record
    null_score = CalibrationRecord(task_id="tiny", generated=tiny, labels=(tiny,))
    assert record_from_obj(record_to_obj(null_score)).score is None


def test_record_requires_score_key(tiny):
    obj = record_to_obj(CalibrationRecord(task_id="tiny", generated=tiny, labels=(tiny,)))
    del obj["score"]
    with pytest.raises(RecordParseError, match="score"):
        record_from_obj(obj)


def test_records_file_roundtrip(tmp_path, tiny):
    other = build_ast("cand", ("Q", 0.0, []))
    records = [
        CalibrationRecord(task_id="tiny", generated=tiny, labels=(tiny,), score=0.5),
        CalibrationRecord(task_id="tiny", generated=tiny, labels=(other,)),
    ]
    path = tmp_path / "records.jsonl"
    write_records(records, path)
    assert read_records(path) == records
    first = path.read_text().splitlines()[0]
    json.loads(first)  # one record per line


def test_read_records_reports_line_number(tmp_path, tiny):
    path = tmp_path / "bad.jsonl"
    good_line = json.dumps(record_to_obj(CalibrationRecord("tiny", tiny, (tiny,))))
    path.write_text(good_line + "\n{broken\n")
    with pytest.raises(RecordParseError, match="line 2"):
        read_records(path)
