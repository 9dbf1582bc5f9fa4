from .exhaustive import BudgetExceeded, ExhaustiveBackend, passing_constants, valid_constant_mask
from .refine import (
    DEFAULT_WIDTHS,
    SignatureMismatch,
    backend_from_spec,
    check_refinement,
    default_backend,
    encode_rule_query,
    infer_flags,
    rule_queries,
    validate_translation,
    verify_rule,
)
from .smt import (
    SolverBackend,
    SolverError,
    SolverPort,
    encode_hole_query,
    encode_query,
    find_solver,
    parse_model,
)
from .verdict import Counterexample, Query, Unknown, Valid, Verdict

__all__ = [
    "BudgetExceeded", "ExhaustiveBackend", "passing_constants", "valid_constant_mask",
    "DEFAULT_WIDTHS", "SignatureMismatch", "backend_from_spec", "check_refinement",
    "default_backend", "encode_rule_query", "infer_flags", "rule_queries",
    "validate_translation", "verify_rule", "SolverBackend", "SolverError", "SolverPort",
    "encode_hole_query", "encode_query", "find_solver", "parse_model", "Counterexample",
    "Query", "Unknown", "Valid", "Verdict",
]
