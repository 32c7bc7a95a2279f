"""Risk-controlling partial programs.

Given a generated program as a weight-annotated AST, prune subtrees under a
calibrated weight budget so that the resulting partial program, viewed as the
set of all its completions, contains a correct program with probability at
least 1-alpha (confidence 1-delta). Calibration runs multiple-hypothesis
testing over a budget grid; an optional selective-execution stage bounds the
cost of labeling calibration samples.
"""

from .ast_model import (
    AnnotatedAst,
    AstNode,
    AstParseError,
    AstValidationError,
    NodePath,
    canonical_serialization,
    node_path,
    parse_ast_json,
    serialize_ast_json,
    total_weight,
)
from .ltt import (
    CalibrationResult,
    LambdaGrid,
    LttConfig,
    binomial_tail_pvalue,
    bonferroni,
    build_default_grid,
    calibrate,
    fixed_sequence,
    holm_bonferroni,
    predict,
    result_from_json,
    result_to_json,
)
from .pruner import (
    PruneConfig,
    PruneTimeoutError,
    RemovalSet,
    prune_bruteforce,
    prune_exact,
    prune_greedy,
    removal_count,
    removal_roots,
    retained_weight,
    validate_removal,
)
from .risk_eval import (
    CalibrationRecord,
    PartialProgram,
    RecordParseError,
    RiskSummary,
    contains,
    empirical_risk,
    read_records,
    set_loss,
    write_records,
)
from .selective import (
    EXEC_ALL,
    ExecutorError,
    SelectiveConfig,
    SelectiveOutcome,
    SelectiveSample,
    error_upper_bound,
    hoeffding_delta,
    outcome_from_json,
    outcome_to_json,
    run_selective_execution,
    select_threshold,
)
from .sim import (
    LabelModel,
    SyntheticConfig,
    TrialReport,
    TrialRow,
    emit_report,
    generate_synthetic_set,
    generate_tasks,
    run_alpha_sweep,
    run_epsilon_sweep,
    run_m_sweep,
    run_selective_trials,
    run_trials,
)

__version__ = "0.1.0"

__all__ = [
    "AnnotatedAst",
    "AstNode",
    "AstParseError",
    "AstValidationError",
    "NodePath",
    "canonical_serialization",
    "node_path",
    "parse_ast_json",
    "serialize_ast_json",
    "total_weight",
    "CalibrationResult",
    "LambdaGrid",
    "LttConfig",
    "binomial_tail_pvalue",
    "bonferroni",
    "build_default_grid",
    "calibrate",
    "fixed_sequence",
    "holm_bonferroni",
    "predict",
    "result_from_json",
    "result_to_json",
    "PruneConfig",
    "PruneTimeoutError",
    "RemovalSet",
    "prune_bruteforce",
    "prune_exact",
    "prune_greedy",
    "removal_count",
    "removal_roots",
    "retained_weight",
    "validate_removal",
    "CalibrationRecord",
    "PartialProgram",
    "RecordParseError",
    "RiskSummary",
    "contains",
    "empirical_risk",
    "read_records",
    "set_loss",
    "write_records",
    "EXEC_ALL",
    "ExecutorError",
    "SelectiveConfig",
    "SelectiveOutcome",
    "SelectiveSample",
    "error_upper_bound",
    "hoeffding_delta",
    "outcome_from_json",
    "outcome_to_json",
    "run_selective_execution",
    "select_threshold",
    "LabelModel",
    "SyntheticConfig",
    "TrialReport",
    "TrialRow",
    "emit_report",
    "generate_synthetic_set",
    "generate_tasks",
    "run_alpha_sweep",
    "run_epsilon_sweep",
    "run_m_sweep",
    "run_selective_trials",
    "run_trials",
    "__version__",
]
