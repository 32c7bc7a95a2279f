"""Bridge from raw benchmark generations to riskprune calibration records.

The core package consumes weighted ASTs and calibration records as JSON; it
never sees model output directly. This package closes the gap for Python
subject programs: it parses source text into grammar-node ASTs, charges each
token's negative log-probability to the deepest covering node, scores
programs by perplexity, executes benchmark tests in a sandbox to label
samples, and emits records in the core's JSON-lines schema. It talks to the
core only through those schemas and the `riskprune` command line.
"""

from ingest.raw import RawSample, IngestInputError, raw_sample_from_obj, read_raw_samples
from ingest.extract import (
    IngestAlignmentError,
    IngestSyntaxError,
    extract_ast,
    perplexity_score,
)
from ingest.sandbox import SandboxInfraError, execute_tests
from ingest.build import TaskBuild, build_calibration_set, write_records_file

__all__ = [
    "RawSample",
    "IngestInputError",
    "IngestAlignmentError",
    "IngestSyntaxError",
    "SandboxInfraError",
    "TaskBuild",
    "raw_sample_from_obj",
    "read_raw_samples",
    "extract_ast",
    "perplexity_score",
    "execute_tests",
    "build_calibration_set",
    "write_records_file",
]
