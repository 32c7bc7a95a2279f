"""Ingest CLI: build end to end, the exec executor contract, exit codes."""

from __future__ import annotations

import json
import subprocess
import sys

from conftest import make_sample
from ingest.raw import raw_sample_from_obj

GOOD = "def add(a, b):\n    return a + b\n"
BAD = "def add(a, b):\n    return a - b\n"
TESTS = ["assert add(2, 3) == 5"]


def _run(args, stdin_text=None, timeout=120):
    return subprocess.run(
        args,
        input=stdin_text,
        capture_output=True,
        text=True,
        timeout=timeout,
    )


def _sample_obj(task_id, source, *, seed=0, is_reference=False):
    sample = make_sample(task_id, source, tuple(TESTS), seed=seed, is_reference=is_reference)
    return {
        "task_id": sample.task_id,
        "source_text": sample.source_text,
        "tokens": [list(pair) for pair in sample.tokens],
        "tests": list(sample.tests),
        "is_reference": sample.is_reference,
    }


def _write_raw(path, objs):
    path.write_text("".join(json.dumps(o) + "\n" for o in objs))


def test_build_end_to_end(tmp_path):
    raw = tmp_path / "raw.jsonl"
    out = tmp_path / "records.jsonl"
    _write_raw(
        raw,
        [
            _sample_obj("good", GOOD, seed=1),
            _sample_obj("good", GOOD, seed=2),
            _sample_obj("good", BAD, seed=3, is_reference=False),
            _sample_obj("hopeless", GOOD, seed=4),
            _sample_obj("hopeless", BAD, seed=5),
        ],
    )
    result = _run(["ingest", "build", "--in", str(raw), "--out", str(out), "--m", "4"])
    assert result.returncode == 0, result.stderr
    assert "tasks: 2  records: 1  excluded: 1  skipped: 0" in result.stdout
    assert "hopeless" in result.stderr and "no correct labels" in result.stderr
    (line,) = out.read_text().splitlines()
    record = json.loads(line)
    assert list(record) == ["task_id", "generated", "labels", "score"]
    assert record["task_id"] == "good" and len(record["labels"]) == 1

    # raw samples in the file round-trip through the schema parser
    for text in raw.read_text().splitlines():
        raw_sample_from_obj(json.loads(text))

    # reruns are byte-identical
    before = out.read_bytes()
    rerun = _run(["ingest", "build", "--in", str(raw), "--out", str(out), "--m", "4"])
    assert rerun.returncode == 0
    assert out.read_bytes() == before


def test_build_missing_input_is_exit_two(tmp_path):
    result = _run(["ingest", "build", "--in", str(tmp_path / "nope"), "--out", str(tmp_path / "o")])
    assert result.returncode == 2
    assert "error:" in result.stderr


def test_build_empty_input_is_exit_two(tmp_path):
    raw = tmp_path / "raw.jsonl"
    raw.write_text("")
    result = _run(["ingest", "build", "--in", str(raw), "--out", str(tmp_path / "o")])
    assert result.returncode == 2
    assert "no samples" in result.stderr


def test_build_malformed_line_is_exit_two(tmp_path):
    raw = tmp_path / "raw.jsonl"
    raw.write_text(json.dumps(_sample_obj("a", GOOD)) + "\n{not json\n")
    result = _run(["ingest", "build", "--in", str(raw), "--out", str(tmp_path / "o")])
    assert result.returncode == 2
    assert "line 2" in result.stderr


def test_exec_prints_verdicts():
    good = json.dumps({"source_text": GOOD, "tests": TESTS})
    bad = json.dumps({"source_text": BAD, "tests": TESTS})
    assert _run(["ingest", "exec"], stdin_text=good).stdout.strip() == "1"
    assert _run(["ingest", "exec"], stdin_text=bad).stdout.strip() == "0"


def test_exec_rejects_malformed_payload():
    assert _run(["ingest", "exec"], stdin_text="{oops").returncode == 2
    missing = json.dumps({"source_text": GOOD})
    assert _run(["ingest", "exec"], stdin_text=missing).returncode == 2


def test_exec_serves_riskprune_selective_exec(tmp_path):
    programs = tmp_path / "programs.jsonl"
    lines = [
        {"score": 0.2, "payload": {"source_text": GOOD, "tests": TESTS}},
        {"score": 0.6, "payload": {"source_text": BAD, "tests": TESTS}},
        {"score": 0.4, "payload": {"source_text": GOOD, "tests": TESTS}},
    ]
    programs.write_text("".join(json.dumps(l) + "\n" for l in lines))
    out = tmp_path / "outcome.json"
    result = _run(
        [
            "riskprune",
            "selective-exec",
            "--programs",
            str(programs),
            "--executor",
            "ingest exec --timeout-ms 4000",
            "--epsilon",
            "0",
            "--gamma",
            "0.05",
            "--h",
            "10",
            "--timeout-ms",
            "8000",
            "--out",
            str(out),
        ]
    )
    assert result.returncode == 0, result.stderr
    outcome = json.loads(out.read_text())
    assert outcome["u_hat"] == "exec_all"
    assert outcome["labels"] == [1, 0, 1]
    assert outcome["executed"] == [0, 1, 2]


def test_module_entry_point_matches_script():
    payload = json.dumps({"source_text": GOOD, "tests": TESTS})
    via_module = _run([sys.executable, "-m", "ingest.cli", "exec"], stdin_text=payload)
    assert via_module.stdout.strip() == "1" and via_module.returncode == 0
