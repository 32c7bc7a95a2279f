"""End-to-end acceptance checks for the ingest bridge.

One test per stated guarantee, each printing a PASS/FAIL line with the
measured value and its bound (run with `pytest tests/test_ingest_acceptance.py -s`):
weight conservation on the 20-program corpus, full-corpus schema validation
by the core command line, zero mislabels on the correct/broken pairs, and
sandbox sentinels that must stay contained.
"""

from __future__ import annotations

import math
import os
import subprocess
import uuid
from pathlib import Path

from conftest import make_sample
from ingest.build import build_calibration_set, write_records_file
from ingest.extract import extract_ast
from ingest.sandbox import execute_tests


def _emit(criterion: str, ok: bool, measured: str, bound: str) -> None:
    print(f"{'PASS' if ok else 'FAIL'} {criterion} -- measured {measured}, bound {bound}")
    assert ok, f"{criterion}: {measured} (bound {bound})"


def test_weight_conservation_over_corpus(corpus_samples):
    worst = 0.0
    for sample in corpus_samples:
        obj = extract_ast(sample)
        total_weight = math.fsum(node["weight"] for node in obj["nodes"])
        total_nll = math.fsum(max(0.0, -lp) for _, lp in sample.tokens)
        worst = max(worst, abs(total_weight - total_nll))
    _emit(
        "ingest-weight-conservation",
        worst < 1e-6,
        f"max abs gap {worst:.3e} over {len(corpus_samples)} programs",
        "< 1e-6",
    )


def test_core_parser_validates_entire_corpus(corpus, tmp_path):
    samples = []
    for i, program in enumerate(corpus):
        samples.append(make_sample(program.name, program.source, program.tests, seed=i))
        samples.append(
            make_sample(program.name, program.source, program.tests, seed=100 + i)
        )
        samples.append(
            make_sample(program.name, program.broken, program.tests, seed=200 + i)
        )
    builds = build_calibration_set(samples, m=2, include_reference=False)
    records_path = tmp_path / "records.jsonl"
    written = write_records_file(builds, records_path)

    result = subprocess.run(
        [
            "riskprune",
            "calibrate",
            "--records",
            str(records_path),
            "--out",
            str(tmp_path / "result.json"),
        ],
        capture_output=True,
        text=True,
        timeout=300,
    )
    # exit 0 (selected) and 3 (abstained) both mean every record parsed;
    # 2 would be a schema rejection
    parsed = result.returncode in (0, 3)
    _emit(
        "ingest-core-schema-validation",
        parsed and written == len(corpus),
        f"{written}/{len(corpus)} records accepted, calibrate exit {result.returncode}",
        "100% accepted, exit in {0, 3}",
    )


def test_execution_labels_have_zero_mislabels(corpus):
    mislabels = 0
    for i, program in enumerate(corpus):
        good = make_sample(program.name, program.source, program.tests, seed=300 + i)
        bad = make_sample(program.name, program.broken, program.tests, seed=400 + i)
        if execute_tests(good, timeout_ms=8000) != 1:
            mislabels += 1
        if execute_tests(bad, timeout_ms=8000) != 0:
            mislabels += 1
    _emit(
        "ingest-execution-labels",
        mislabels == 0,
        f"{mislabels} mislabels over {len(corpus)} correct/broken pairs",
        "0 allowed",
    )


def test_sandbox_sentinels_stay_contained():
    escape_target = Path(os.path.expanduser("~")) / f"ingest-escape-{uuid.uuid4().hex}.txt"
    sentinels = {
        "file-escape": make_sample(
            "file-escape",
            f"with open({str(escape_target)!r}, 'w') as fh:\n    fh.write('out')\n",
            ("assert True",),
        ),
        "network": make_sample(
            "network",
            "import urllib.request\nurllib.request.urlopen('http://127.0.0.1:9/', timeout=2)\n",
            ("assert True",),
        ),
        "infinite-loop": make_sample(
            "infinite-loop", "while True:\n    pass\n", ("assert True",)
        ),
    }
    verdicts = {
        name: execute_tests(sample, timeout_ms=1500) for name, sample in sentinels.items()
    }
    contained = sum(verdict == 0 for verdict in verdicts.values())
    host_clean = not escape_target.exists()
    if escape_target.exists():
        escape_target.unlink()
    _emit(
        "ingest-sandbox-sentinels",
        contained == len(sentinels) and host_clean,
        f"{contained}/{len(sentinels)} labeled 0, host file absent: {host_clean}",
        "all contained",
    )
