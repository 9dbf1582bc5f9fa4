"""Precondition expressions over symbolic constants.

Arithmetic is performed at the width of the symbolic constants involved
(modular); literals and ``width(%x)`` are untyped integers that adopt the
width of whatever they are combined with.  Evaluation is numpy-friendly so
a precondition can filter an entire constant space at once.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from ..ir.core import mask


class PredError(Exception):
    pass


class PredSyntaxError(PredError):
    pass


class UnboundSymbolError(PredError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class PredTypeError(PredError):
    pass


@dataclass(frozen=True)
class Lit:
    value: int


@dataclass(frozen=True)
class BoolLit:
    value: bool


@dataclass(frozen=True)
class Sym:
    name: str


@dataclass(frozen=True)
class WidthOf:
    var: str


@dataclass(frozen=True)
class Unary:
    op: str
    arg: object


@dataclass(frozen=True)
class Binary:
    op: str
    lhs: object
    rhs: object


@dataclass(frozen=True)
class Call:
    fn: str
    args: tuple


PredExpr = object  # any of the node classes above

TRUE = BoolLit(True)

COMPARISONS = ("==", "!=", "ult", "ule", "ugt", "uge", "slt", "sle", "sgt", "sge")
ARITH = ("+", "-", "*", "&", "|", "^", "<<", ">>")
FUNCTIONS = {"isPowerOf2": 1}

_PREC = {"||": 1, "&&": 2, **{c: 3 for c in COMPARISONS}, "|": 4, "^": 5, "&": 6,
         "<<": 7, ">>": 7, "+": 8, "-": 8, "*": 9}
_UNARY_PREC = 10

_TOK = re.compile(r"\s*(?:(&&|\|\||==|!=|<<|>>|[-+*&|^~!(),])|(%[A-Za-z0-9_.]+)|(-?\d+)|([A-Za-z_][A-Za-z0-9_]*))")


def _tokens(text: str):
    pos, out = 0, []
    text = text.rstrip()
    while pos < len(text):
        m = _TOK.match(text, pos)
        if not m:
            raise PredSyntaxError(f"bad precondition at column {pos + 1}: {text[pos:]!r}")
        op, var, num, word = m.groups()
        if op:
            out.append(("op", op))
        elif var:
            out.append(("var", var[1:]))
        elif num:
            out.append(("int", int(num)))
        else:
            out.append(("word", word))
        pos = m.end()
    return out


class _Parser:
    def __init__(self, text):
        self.toks = _tokens(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else (None, None)

    def take(self):
        t = self.peek()
        self.i += 1
        return t

    def expect(self, kind, value=None):
        t = self.take()
        if t[0] != kind or (value is not None and t[1] != value):
            raise PredSyntaxError(f"expected {value or kind}, found {t[1]!r}")
        return t

    def binop(self):
        kind, v = self.peek()
        if kind == "op" and v in _PREC:
            return v
        if kind == "word" and v in COMPARISONS:
            return v
        return None

    def expr(self, min_prec=1):
        lhs = self.unary()
        while True:
            op = self.binop()
            if op is None or _PREC[op] < min_prec:
                return lhs
            self.take()
            # comparisons do not chain
            nxt = _PREC[op] + 1
            rhs = self.expr(nxt)
            lhs = Binary(op, lhs, rhs)
            if op in COMPARISONS and self.binop() in COMPARISONS:
                raise PredSyntaxError("comparisons do not chain; add parentheses")

    def unary(self):
        kind, v = self.peek()
        if kind == "op" and v in ("~", "-", "!"):
            self.take()
            arg = self.unary()
            if v == "-" and isinstance(arg, Lit):
                return Lit(-arg.value)
            return Unary(v, arg)
        return self.atom()

    def atom(self):
        kind, v = self.take()
        if kind == "int":
            return Lit(v)
        if kind == "op" and v == "(":
            e = self.expr()
            self.expect("op", ")")
            return e
        if kind == "word":
            if v in ("true", "false"):
                return BoolLit(v == "true")
            if v == "width":
                self.expect("op", "(")
                _, name = self.expect("var")
                self.expect("op", ")")
                return WidthOf(name)
            if v in FUNCTIONS:
                self.expect("op", "(")
                args = [self.expr()]
                while self.peek() == ("op", ","):
                    self.take()
                    args.append(self.expr())
                self.expect("op", ")")
                if len(args) != FUNCTIONS[v]:
                    raise PredSyntaxError(f"{v} takes {FUNCTIONS[v]} argument(s)")
                return Call(v, tuple(args))
            if v in COMPARISONS:
                raise PredSyntaxError(f"misplaced {v}")
            return Sym(v)
        raise PredSyntaxError(f"unexpected {v!r} in precondition")


def parse_pred(text: str):
    p = _Parser(text)
    e = p.expr()
    if p.i != len(p.toks):
        raise PredSyntaxError(f"trailing input in precondition: {p.peek()[1]!r}")
    return e


def format_pred(e, parent: int = 0) -> str:
    if isinstance(e, Lit):
        s = str(e.value)
        return f"({s})" if e.value < 0 and parent >= _UNARY_PREC else s
    if isinstance(e, BoolLit):
        return "true" if e.value else "false"
    if isinstance(e, Sym):
        return e.name
    if isinstance(e, WidthOf):
        return f"width(%{e.var})"
    if isinstance(e, Call):
        return f"{e.fn}(" + ", ".join(format_pred(a) for a in e.args) + ")"
    if isinstance(e, Unary):
        s = e.op + format_pred(e.arg, _UNARY_PREC)
        return f"({s})" if parent > _UNARY_PREC else s
    p = _PREC[e.op]
    op = f" {e.op} "
    s = format_pred(e.lhs, p) + op + format_pred(e.rhs, p + 1)
    return f"({s})" if p < parent else s


def symbols(e) -> list[str]:
    """Symbolic constants in order of first appearance."""
    out: list[str] = []

    def walk(x):
        if isinstance(x, Sym):
            if x.name not in out:
                out.append(x.name)
        elif isinstance(x, Unary):
            walk(x.arg)
        elif isinstance(x, Binary):
            walk(x.lhs)
            walk(x.rhs)
        elif isinstance(x, Call):
            for a in x.args:
                walk(a)

    walk(e)
    return out


def width_vars(e) -> list[str]:
    out: list[str] = []

    def walk(x):
        if isinstance(x, WidthOf):
            if x.var not in out:
                out.append(x.var)
        elif isinstance(x, Unary):
            walk(x.arg)
        elif isinstance(x, Binary):
            walk(x.lhs)
            walk(x.rhs)
        elif isinstance(x, Call):
            for a in x.args:
                walk(a)

    walk(e)
    return out


def is_bool(e) -> bool:
    if isinstance(e, BoolLit):
        return True
    if isinstance(e, Binary):
        return e.op in COMPARISONS or e.op in ("&&", "||")
    if isinstance(e, Unary):
        return e.op == "!"
    if isinstance(e, Call):
        return e.fn == "isPowerOf2"
    return False


def conj(*parts):
    parts = [p for p in parts if p is not None and p != TRUE]
    if not parts:
        return TRUE
    e = parts[0]
    for p in parts[1:]:
        e = Binary("&&", e, p)
    return e


def disj(*parts):
    parts = [p for p in parts if p is not None]
    if not parts:
        return BoolLit(False)
    e = parts[0]
    for p in parts[1:]:
        e = Binary("||", e, p)
    return e


# -- evaluation -------------------------------------------------------------


def _b(x):
    return np.asarray(x, dtype=bool)


class _Evaluator:
    """``consts`` maps symbol -> (value or array, width); ``widths`` var -> width."""

    def __init__(self, consts, widths):
        self.consts = consts
        self.widths = widths

    def unify(self, a, b, where):
        (va, wa), (vb, wb) = a, b
        if wa is not None and wb is not None and wa != wb:
            raise PredTypeError(f"width mismatch in {where}: i{wa} vs i{wb}")
        w = wa if wa is not None else wb
        if w is not None:
            if wa is None:
                va = va & mask(w)
            if wb is None:
                vb = vb & mask(w)
        return va, vb, w

    def num(self, e):
        if isinstance(e, Lit):
            return e.value, None
        if isinstance(e, Sym):
            if e.name not in self.consts:
                raise UnboundSymbolError(f"unbound symbol {e.name}")
            return self.consts[e.name]
        if isinstance(e, WidthOf):
            if e.var not in self.widths:
                raise UnboundSymbolError(f"unbound variable %{e.var}")
            return self.widths[e.var], None
        if isinstance(e, Unary) and e.op in ("~", "-"):
            v, w = self.num(e.arg)
            r = ~v if e.op == "~" else -v
            return (r if w is None else r & mask(w)), w
        if isinstance(e, Binary) and e.op in ARITH:
            a, b, w = self.unify(self.num(e.lhs), self.num(e.rhs), e.op)
            op = e.op
            if op == "<<":
                if w is None:
                    return a << min(b, 4096), None
                big = _b(b >= w)
                s = np.where(big, 0, b)
                return np.where(big, 0, (a << s) & mask(w)), w
            if op == ">>":
                if w is None:
                    return a >> min(b, 4096), None
                big = _b(b >= w)
                return np.where(big, 0, a >> np.where(big, 0, b)), w
            r = {"+": lambda: a + b, "-": lambda: a - b, "*": lambda: a * b,
                 "&": lambda: a & b, "|": lambda: a | b, "^": lambda: a ^ b}[op]()
            return (r if w is None else r & mask(w)), w
        if is_bool(e):
            raise PredTypeError("boolean used where an integer is expected")
        raise PredTypeError(f"cannot evaluate {e!r}")

    def truth(self, e):
        if isinstance(e, BoolLit):
            return np.bool_(e.value)
        if isinstance(e, Unary) and e.op == "!":
            return ~_b(self.truth(e.arg))
        if isinstance(e, Binary) and e.op in ("&&", "||"):
            a, b = _b(self.truth(e.lhs)), _b(self.truth(e.rhs))
            return a & b if e.op == "&&" else a | b
        if isinstance(e, Binary) and e.op in COMPARISONS:
            a, b, w = self.unify(self.num(e.lhs), self.num(e.rhs), e.op)
            op = e.op
            if op[0] == "s" and w is not None:
                a = a - ((a >> (w - 1)) & 1) * (1 << w)
                b = b - ((b >> (w - 1)) & 1) * (1 << w)
            rel = op if op in ("==", "!=") else op[1:]
            return _b({"==": a == b, "!=": a != b, "lt": a < b, "le": a <= b,
                       "gt": a > b, "ge": a >= b}[rel])
        if isinstance(e, Call) and e.fn == "isPowerOf2":
            v, w = self.num(e.args[0])
            return _b((v != 0) & ((v & (v - 1)) == 0)) & _b(v > 0)
        raise PredTypeError("integer used where a boolean is expected")


def eval_pred_arrays(e, consts, widths):
    """Vectorized truth of ``e``; ``consts`` maps symbol -> (array, width)."""
    return _b(_Evaluator(consts, widths).truth(e))


def eval_precondition(pre, binding, widths=None) -> bool:
    """Truth of ``pre`` for one binding.

    ``binding`` maps each symbol to a Const (or to an ``(int, width)``
    pair); ``widths`` maps pattern variables to their bound width for
    ``width(%x)``.  A missing precondition is true.
    """
    if pre is None:
        return True
    consts = {}
    for k, v in binding.items():
        if hasattr(v, "value") and hasattr(v, "width"):
            consts[k] = (v.value, v.width)
        elif isinstance(v, tuple):
            consts[k] = (v[0] & mask(v[1]), v[1])
    return bool(_Evaluator(consts, dict(widths or {})).truth(pre))


def check_pred_types(e, sym_widths: dict, var_names) -> list[str]:
    """Static problems with ``e`` given symbol widths (None = polymorphic)."""
    problems = []
    for s in symbols(e):
        if s not in sym_widths:
            problems.append(f"precondition uses unbound symbol {s}")
    for v in width_vars(e):
        if v not in var_names:
            problems.append(f"precondition uses unknown value %{v}")
    if problems:
        return problems
    if not is_bool(e):
        return ["precondition is not a boolean expression"]
    try:
        probe = {s: (0, w if w is not None else 8) for s, w in sym_widths.items()}
        _Evaluator(probe, {v: 8 for v in var_names}).truth(e)
    except PredError as exc:
        problems.append(str(exc))
    return problems
