"""Command-line front end for the ingest bridge.

`ingest build` turns a raw-sample JSON-lines file into core calibration
records; `ingest exec` is a ready-made executor for `riskprune
selective-exec`: it reads one {"source_text", "tests"} payload from stdin,
runs it in the sandbox, and prints 1 or 0.

Exit codes: 0 ok, 2 input error, 4 sandbox infrastructure failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from ingest.build import build_calibration_set, write_records_file
from ingest.extract import IngestAlignmentError
from ingest.raw import IngestInputError, RawSample, read_raw_samples
from ingest.sandbox import SandboxInfraError, execute_tests

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INFRA = 4


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _cmd_build(args) -> int:
    try:
        samples = read_raw_samples(args.in_path)
    except OSError as exc:
        raise CliError(EXIT_INPUT, f"cannot read {args.in_path}: {exc}") from exc
    if not samples:
        raise CliError(EXIT_INPUT, f"{args.in_path}: no samples")
    builds = build_calibration_set(
        samples,
        m=args.m,
        include_reference=args.include_reference,
        timeout_ms=args.timeout_ms,
        jobs=args.jobs,
    )
    for build in builds:
        if build.skip_reason is not None:
            print(
                f"warning: task {build.task_id!r} skipped, reason {build.skip_reason}",
                file=sys.stderr,
            )
        elif build.excluded:
            print(
                f"warning: task {build.task_id!r} has no correct labels; excluded",
                file=sys.stderr,
            )
    written = write_records_file(builds, args.out_path)
    excluded = sum(build.excluded for build in builds)
    skipped = sum(build.skip_reason is not None for build in builds)
    print(f"tasks: {len(builds)}  records: {written}  excluded: {excluded}  skipped: {skipped}")
    print(f"wrote {args.out_path}")
    return EXIT_OK


def _cmd_exec(args) -> int:
    try:
        payload = json.load(sys.stdin)
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_INPUT, f"stdin: {exc}") from exc
    if not isinstance(payload, dict):
        raise CliError(EXIT_INPUT, "stdin: expected a payload object")
    try:
        source = payload["source_text"]
        tests = payload["tests"]
    except KeyError as exc:
        raise CliError(EXIT_INPUT, f"stdin: missing payload field {exc}") from exc
    if not isinstance(source, str) or not isinstance(tests, list):
        raise CliError(EXIT_INPUT, "stdin: source_text must be a string, tests an array")
    sample = RawSample(
        task_id=str(payload.get("task_id", "payload")),
        source_text=source,
        tokens=(),
        tests=tuple(tests),
        is_reference=False,
    )
    print(execute_tests(sample, timeout_ms=args.timeout_ms))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ingest",
        description="Bridge raw benchmark generations to riskprune calibration records.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    build = sub.add_parser("build", help="raw samples JSONL to calibration records JSONL")
    build.add_argument("--in", dest="in_path", required=True, help="raw-sample JSON lines")
    build.add_argument("--out", dest="out_path", required=True, help="records JSON lines")
    build.add_argument("--m", type=int, default=20, help="label candidates per task (default 20)")
    build.add_argument(
        "--timeout-ms", type=int, default=5000, help="per-execution limit (default 5000)"
    )
    build.add_argument(
        "--include-reference",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="add the reference solution to the labels (default on)",
    )
    build.add_argument("--jobs", type=int, default=1, help="parallel executions (default 1)")
    build.set_defaults(func=_cmd_build)

    exec_ = sub.add_parser("exec", help="executor for riskprune selective-exec")
    exec_.add_argument(
        "--timeout-ms", type=int, default=5000, help="execution limit (default 5000)"
    )
    exec_.set_defaults(func=_cmd_exec)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (IngestInputError, IngestAlignmentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SandboxInfraError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFRA


if __name__ == "__main__":
    sys.exit(main())
