"""Command-line front end.

Subcommands: calibrate, predict, validate, selective-exec, simulate, report.
Exit codes: 0 ok, 2 input error, 3 abstention, 4 executor failure. All
randomness enters through --seed; repeated runs write byte-identical
artifacts.

Config file: a flat JSON object whose keys are the synthetic/calibration/
selective config fields by name; command-line flags override file values.
"""

from __future__ import annotations

import argparse
import json
import logging
import shlex
import subprocess
import sys
from pathlib import Path

from .ast_model import AnnotatedAst, parse_ast_json
from .ltt import (
    LambdaGrid,
    LttConfig,
    calibrate,
    predict,
    result_from_obj,
    result_to_obj,
)
from .pruner import removal_to_obj
from .risk_eval import read_records
from .selective import ExecutorError, SelectiveConfig, outcome_to_obj, run_selective_execution
from .sim import (
    LabelModel,
    SyntheticConfig,
    emit_report,
    report_from_obj,
    report_to_obj,
    run_alpha_sweep,
    run_epsilon_sweep,
    run_m_sweep,
    run_selective_trials,
    run_trials,
)
from .validate import run_suite

log = logging.getLogger("riskprune")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_ABSTAIN = 3
EXIT_EXECUTOR = 4


class CliError(Exception):
    def __init__(self, code: int, message: str) -> None:
        super().__init__(message)
        self.code = code


# -- config assembly ---------------------------------------------------------


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        obj = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(EXIT_INPUT, f"config {path}: {exc}") from exc
    if not isinstance(obj, dict):
        raise CliError(EXIT_INPUT, f"config {path}: expected a JSON object")
    return obj


def _pick(args_value, file_config: dict, key: str, default):
    if args_value is not None:
        return args_value
    if key in file_config:
        return file_config[key]
    return default


def _build_ltt(args, cfg: dict) -> LttConfig:
    grid = None
    if "grid" in cfg:
        grid = LambdaGrid(tuple(float(v) for v in cfg["grid"]))
    try:
        return LttConfig(
            alpha=float(_pick(args.alpha, cfg, "alpha", 0.1)),
            delta=float(_pick(args.delta, cfg, "delta", 0.1)),
            t_max=int(_pick(args.tmax, cfg, "t_max", 1)),
            fwer=_pick(args.fwer, cfg, "fwer", "fst"),
            fst_starts=int(_pick(args.fst_starts, cfg, "fst_starts", 10)),
            grid=grid,
            grid_step=float(_pick(args.grid_step, cfg, "grid_step", 0.02)),
            time_limit_ms=_pick(args.timeout_ms, cfg, "time_limit_ms", None),
        )
    except ValueError as exc:
        raise CliError(EXIT_INPUT, str(exc)) from exc


def _build_selective(args, cfg: dict) -> SelectiveConfig:
    weights = cfg.get("weights")
    try:
        return SelectiveConfig(
            epsilon=float(_pick(args.epsilon, cfg, "epsilon", 0.1)),
            gamma=float(_pick(args.gamma, cfg, "gamma", 0.05)),
            h=int(_pick(args.h, cfg, "h", 1000)),
            bound=cfg.get("bound", "hoeffding"),
            seed=int(_pick(args.seed, cfg, "seed", 0)),
            weights=None if weights is None else tuple(float(w) for w in weights),
        )
    except ValueError as exc:
        raise CliError(EXIT_INPUT, str(exc)) from exc


def _build_synthetic(args, cfg: dict) -> SyntheticConfig:
    label_model = cfg.get("label_model", {})
    try:
        return SyntheticConfig(
            n_tasks=int(cfg.get("n_tasks", 100)),
            tree_size_range=tuple(cfg.get("tree_size_range", (6, 24))),
            weight_model=tuple(cfg.get("weight_model", ("uniform", 0.01, 0.2))),
            label_model=LabelModel(**label_model),
            miscalibration=float(cfg.get("miscalibration", 0.0)),
            m=int(cfg.get("m", 20)),
            seed=int(_pick(args.seed, cfg, "seed", 0)),
        )
    except (TypeError, ValueError) as exc:
        raise CliError(EXIT_INPUT, str(exc)) from exc


def _read_records_checked(path: str):
    try:
        records = read_records(path)
    except OSError as exc:
        raise CliError(EXIT_INPUT, f"records {path}: {exc}") from exc
    except ValueError as exc:
        raise CliError(EXIT_INPUT, f"records {path}: {exc}") from exc
    if not records:
        raise CliError(EXIT_INPUT, f"records {path}: file contains no records")
    return records


def _read_ast(path: str) -> AnnotatedAst:
    try:
        return parse_ast_json(Path(path).read_bytes())
    except OSError as exc:
        raise CliError(EXIT_INPUT, f"ast {path}: {exc}") from exc
    except ValueError as exc:
        raise CliError(EXIT_INPUT, f"ast {path}: {exc}") from exc


def _write_json(path: str | None, obj) -> None:
    text = json.dumps(obj, indent=2) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


# -- subcommands ---------------------------------------------------------------


def _cmd_calibrate(args) -> int:
    cfg = _load_config(args.config)
    ltt = _build_ltt(args, cfg)
    records = _read_records_checked(args.records)
    result = calibrate(records, ltt, jobs=args.jobs)
    _write_json(args.out, result_to_obj(result))

    print(f"records: {len(records)}  grid: {len(result.grid)} budgets  fwer: {ltt.fwer}")
    print(f"{'lambda':>10}  {'risk':>8}  {'pvalue':>10}  {'removal':>8}  valid")
    valid = set(result.valid)
    for lam, risk, p, rem in zip(result.grid, result.risk, result.pvalues, result.removal):
        mark = "*" if lam in valid else ""
        print(f"{lam:>10.4f}  {risk:>8.4f}  {p:>10.3e}  {rem:>8.4f}  {mark}")
    if result.lambda_hat is None:
        print("selection: ABSTAIN (no budget passed testing)")
        return EXIT_ABSTAIN
    print(f"selection: lambda_hat = {result.lambda_hat:.6g}")
    return EXIT_OK


def _render_partial(ast: AnnotatedAst, removed: frozenset) -> str:
    """Indented dump of the pruned tree; removed subtrees become holes."""
    if ast.root_id in removed:
        return f"[hole: {ast.n_nodes} nodes removed]\n"
    lines: list[str] = []

    def walk(v: int, depth: int) -> None:
        pad = "  " * depth
        if v in removed:
            lines.append(f"{pad}[hole: {len(ast.subtree_ids(v))} nodes removed]")
            return
        node = ast.nodes[v]
        lines.append(f"{pad}{node.label} (id={v}, w={node.weight:.6g})")
        for c in node.children:
            walk(c, depth + 1)

    walk(ast.root_id, 0)
    return "\n".join(lines) + "\n"


def _cmd_predict(args) -> int:
    ast = _read_ast(args.ast)
    try:
        result = result_from_obj(json.loads(Path(args.result).read_text()))
    except (OSError, ValueError) as exc:
        raise CliError(EXIT_INPUT, f"result {args.result}: {exc}") from exc
    partial = predict(ast, result, t_max=args.tmax if args.tmax is not None else 1,
                      time_limit_ms=args.timeout_ms)
    if partial is None:
        print("ABSTAIN: calibration selected no budget; no set can be issued")
        return EXIT_ABSTAIN
    _write_json(args.out, removal_to_obj(partial.removal))
    n_removed = len(partial.removal.removed)
    print(f"removed {n_removed}/{ast.n_nodes} nodes at lambda_hat={result.lambda_hat:.6g}")
    sys.stdout.write(_render_partial(ast, partial.removal.removed))
    return EXIT_OK


def _cmd_validate(args) -> int:
    try:
        results = run_suite(args.suite, seed=args.seed if args.seed is not None else 0)
    except ValueError as exc:
        raise CliError(EXIT_INPUT, str(exc)) from exc
    for check in results:
        print(check.line())
    failed = [c for c in results if not c.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_OK if not failed else 1


def _subprocess_executor(cmd: list[str], payload, timeout_ms: int | None):
    text = payload if isinstance(payload, str) else json.dumps(payload, separators=(",", ":"))
    timeout = (timeout_ms or 5000) / 1000.0

    def run() -> int:
        proc = subprocess.run(
            cmd, input=text.encode(), capture_output=True, timeout=timeout
        )
        if proc.returncode != 0:
            raise RuntimeError(f"exit code {proc.returncode}: {proc.stderr.decode(errors='replace').strip()}")
        out = proc.stdout.decode().strip()
        if out not in ("0", "1"):
            raise RuntimeError(f"expected 0 or 1 on stdout, got {out!r}")
        return int(out)

    return run


def _cmd_selective_exec(args) -> int:
    cfg = _load_config(args.config)
    sel = _build_selective(args, cfg)
    cmd = shlex.split(args.executor)
    if not cmd:
        raise CliError(EXIT_INPUT, "executor command is empty")

    programs = []
    try:
        with open(args.programs, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    score = float(obj["score"])
                    payload = obj["payload"]
                except (ValueError, KeyError, TypeError) as exc:
                    raise CliError(
                        EXIT_INPUT, f"programs {args.programs}: line {lineno}: {exc}"
                    ) from exc
                programs.append((score, _subprocess_executor(cmd, payload, args.timeout_ms)))
    except OSError as exc:
        raise CliError(EXIT_INPUT, f"programs {args.programs}: {exc}") from exc
    if not programs:
        raise CliError(EXIT_INPUT, f"programs {args.programs}: file contains no programs")

    try:
        outcome = run_selective_execution(programs, sel, jobs=args.jobs)
    except ExecutorError as exc:
        raise CliError(EXIT_EXECUTOR, str(exc)) from exc
    _write_json(args.out, outcome_to_obj(outcome))
    u = "exec_all" if outcome.u_hat == float("-inf") else f"{outcome.u_hat:.6g}"
    print(
        f"u_hat: {u}  executed: {len(outcome.executed)}/{len(programs)}  "
        f"fraction_saved: {outcome.fraction_saved:.4f}"
    )
    return EXIT_OK


def _cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    data = _build_synthetic(args, cfg)
    ltt = _build_ltt(args, cfg)
    trials = args.trials
    if args.sweep == "alpha":
        report = run_alpha_sweep(data, ltt, (0.05, 0.1, 0.15, 0.2, 0.25, 0.3), trials, args.split)
    elif args.sweep == "m":
        report = run_m_sweep(data, ltt, (1, 5, 20, 80), trials, args.split)
    elif args.sweep == "epsilon":
        sel = _build_selective(args, cfg)
        report = run_epsilon_sweep(data, sel, ltt, (0.05, 0.1, 0.2, 0.3), trials, args.split)
    elif args.sweep == "selective":
        sel = _build_selective(args, cfg)
        report = run_selective_trials(data, sel, ltt, trials, args.split, jobs=args.jobs)
    else:
        report = run_trials(data, ltt, trials, args.split, jobs=args.jobs)
    formats = args.format.split(",")
    paths = emit_report(report, formats, args.out)
    abstained = sum(r.abstained for r in report.rows)
    print(f"trials: {len(report.rows)}  abstained: {abstained}")
    for path in paths:
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_report(args) -> int:
    try:
        report = report_from_obj(json.loads(Path(args.input).read_text()))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise CliError(EXIT_INPUT, f"report {args.input}: {exc}") from exc
    try:
        paths = emit_report(report, args.format.split(","), args.out)
    except ValueError as exc:
        raise CliError(EXIT_INPUT, str(exc)) from exc
    for path in paths:
        print(f"wrote {path}")
    return EXIT_OK


# -- argument parsing -------------------------------------------------------------


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--alpha", type=float, default=None, help="risk level (default 0.1)")
    parser.add_argument("--delta", type=float, default=None, help="confidence level (default 0.1)")
    parser.add_argument("--tmax", type=int, default=None, help="max removal roots (default 1)")
    parser.add_argument("--grid-step", type=float, default=None, help="budget grid step (default 0.02)")
    parser.add_argument("--fwer", choices=("bonferroni", "holm", "fst"), default=None,
                        help="multiple-testing procedure (default fst)")
    parser.add_argument("--fst-starts", type=int, default=None,
                        help="fixed-sequence start count (default 10)")
    parser.add_argument("--epsilon", type=float, default=None, help="label error budget")
    parser.add_argument("--gamma", type=float, default=None, help="label error confidence")
    parser.add_argument("--h", type=int, default=None, help="selective-execution draw count")
    parser.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    parser.add_argument("--jobs", type=int, default=1, help="parallel workers (default 1)")
    parser.add_argument("--timeout-ms", type=int, default=None,
                        help="per-prune / per-execution time limit")
    parser.add_argument("--config", default=None, help="JSON config file (flags override)")
    parser.add_argument("--log-level", default="info",
                        choices=("debug", "info", "warning", "error"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="riskprune",
        description="Calibrated AST pruning with distribution-free risk control.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="select a weight budget from labeled records")
    p.add_argument("--records", required=True, help="JSON-lines calibration records")
    p.add_argument("--out", default=None, help="write calibration result JSON here")
    _common_flags(p)
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("predict", help="prune a fresh AST at the calibrated budget")
    p.add_argument("--ast", required=True, help="AST JSON file")
    p.add_argument("--result", required=True, help="calibration result JSON")
    p.add_argument("--out", default=None, help="write removal JSON here")
    _common_flags(p)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("validate", help="run a statistical validation suite")
    p.add_argument("--suite", default="all",
                   choices=("pruner-oracle", "pvalues", "fwer", "coverage", "selective", "all"))
    _common_flags(p)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("selective-exec", help="label programs, executing tests selectively")
    p.add_argument("--programs", required=True,
                   help="JSON-lines: {\"score\": float, \"payload\": any} per program")
    p.add_argument("--executor", required=True,
                   help="command run per program: payload on stdin, prints 1 or 0")
    p.add_argument("--out", default=None, help="write outcome JSON here")
    _common_flags(p)
    p.set_defaults(func=_cmd_selective_exec)

    p = sub.add_parser("simulate", help="Monte-Carlo trials on synthetic data")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--split", type=float, default=0.5)
    p.add_argument("--sweep", choices=("none", "alpha", "m", "epsilon", "selective"),
                   default="none")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--format", default="json,csv,svg")
    _common_flags(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("report", help="re-render a stored trial report")
    p.add_argument("--input", required=True, help="report JSON produced by simulate")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--format", default="csv,svg")
    _common_flags(p)
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level.upper()))
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ExecutorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EXECUTOR
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
