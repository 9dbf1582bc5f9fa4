from .core import (
    BINARY_OPS,
    CAST_OPS,
    COMMUTATIVE_OPS,
    FLAG_OPS,
    FLAG_ORDER,
    ICMP_CONDS,
    MAX_WIDTH,
    OPCODES,
    Const,
    Function,
    Instruction,
    IRError,
    Operand,
    ParseError,
    SSAError,
    Var,
    WidthError,
    fresh_name,
    is_commutative,
    mask,
    to_signed,
)
from .passes import cost, dce, depth_map, histogram, replace_uses, rescale
from .semantics import POISON, EvalError, dtype_for, eval_arrays, evaluate, lane
from .text import parse_function, parse_module, print_function, print_instruction, print_module

__all__ = [
    "BINARY_OPS", "CAST_OPS", "COMMUTATIVE_OPS", "FLAG_OPS", "FLAG_ORDER", "ICMP_CONDS",
    "MAX_WIDTH", "OPCODES", "Const", "Function", "Instruction", "IRError", "Operand",
    "ParseError", "SSAError", "Var", "WidthError", "fresh_name", "is_commutative", "mask",
    "to_signed", "cost", "dce", "depth_map", "histogram", "replace_uses", "rescale",
    "POISON", "EvalError", "dtype_for", "eval_arrays", "evaluate", "lane",
    "parse_function", "parse_module", "print_function", "print_instruction", "print_module",
]
