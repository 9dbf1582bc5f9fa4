from .parse import load_rules, parse_rule, parse_rules
from .pred import (
    PredError,
    PredSyntaxError,
    PredTypeError,
    UnboundSymbolError,
    eval_pred_arrays,
    eval_precondition,
    format_pred,
    parse_pred,
)
from .rule import (
    Diagnostic,
    PInstr,
    PLit,
    PSym,
    PVar,
    Rule,
    RuleError,
    RuleSyntaxError,
    RuleTypeError,
    UnboundError,
    binding_assignment,
    check_binding_pre,
    check_wellformed,
    format_rule,
    format_rules,
    instantiate_rhs,
    rule_functions,
    validate_width_set,
    with_rhs,
)

__all__ = [
    "load_rules", "parse_rule", "parse_rules", "PredError", "PredSyntaxError", "PredTypeError",
    "UnboundSymbolError", "eval_pred_arrays", "eval_precondition", "format_pred", "parse_pred",
    "Diagnostic", "PInstr", "PLit", "PSym", "PVar", "Rule", "RuleError", "RuleSyntaxError",
    "RuleTypeError", "UnboundError", "binding_assignment", "check_binding_pre",
    "check_wellformed", "format_rule", "format_rules", "instantiate_rhs", "rule_functions",
    "validate_width_set", "with_rhs",
]
