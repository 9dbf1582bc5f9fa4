"""Rewrite rules: pattern types, width inference, well-formedness, instantiation."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

from ..ir.core import (
    CAST_OPS,
    FLAG_OPS,
    OPCODES,
    Const,
    Function,
    Instruction,
    IRError,
    NameSupply,
    Var,
    check_width,
    operand_arity,
)
from . import pred as P


class RuleError(Exception):
    pass


class RuleSyntaxError(RuleError):
    pass


class UnboundError(RuleError):
    pass


class RuleTypeError(RuleError):
    pass


@dataclass(frozen=True)
class PVar:
    """``%name``: an input variable, or a value defined earlier in the rule."""

    name: str

    def __str__(self):
        return "%" + self.name


@dataclass(frozen=True)
class PSym:
    """Symbolic constant such as ``C`` or ``C1``."""

    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class PLit:
    value: int
    width: int | None = None

    def __str__(self):
        return f"i{self.width} {self.value}" if self.width else str(self.value)


POperand = Union[PVar, PSym, PLit]


@dataclass(frozen=True)
class PInstr:
    name: str
    op: str
    operands: tuple
    flags: tuple = ()
    cond: str | None = None
    width: int | None = None  # explicit annotation; for icmp the operand width

    def __str__(self):
        head = f"icmp {self.cond}" if self.op == "icmp" else self.op
        if self.flags:
            head += " " + " ".join(self.flags)
        if self.width is not None:
            head += f" i{self.width}"
        return f"%{self.name} = {head} " + ", ".join(map(str, self.operands))


@dataclass(frozen=True)
class Diagnostic:
    level: str  # "error" | "warning"
    message: str

    def __str__(self):
        return f"{self.level}: {self.message}"


class _UnionFind:
    def __init__(self):
        self.parent = {}
        self.fixed = {}

    def find(self, k):
        self.parent.setdefault(k, k)
        while self.parent[k] != k:
            self.parent[k] = self.parent[self.parent[k]]
            k = self.parent[k]
        return k

    def fix(self, k, w, where):
        r = self.find(k)
        old = self.fixed.get(r)
        if old is not None and old != w:
            raise RuleTypeError(f"{where}: width conflict i{old} vs i{w}")
        self.fixed[r] = w

    def union(self, a, b, where):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        wa, wb = self.fixed.get(ra), self.fixed.get(rb)
        if wa is not None and wb is not None and wa != wb:
            raise RuleTypeError(f"{where}: width conflict i{wa} vs i{wb}")
        self.parent[rb] = ra
        if wb is not None:
            self.fixed[ra] = wb
        self.fixed.pop(rb, None)


def operand_key(o, side: str, i: int, j: int):
    if isinstance(o, PVar):
        return ("v", o.name)
    if isinstance(o, PSym):
        return ("s", o.name)
    return ("l", side, i, j)


@dataclass
class RuleTyping:
    """Width classes of every value, symbol and literal slot of a rule."""

    uf: _UnionFind
    casts: list = field(default_factory=list)  # (op, src_key, dst_key)

    def cls(self, key):
        return self.uf.find(key)

    @cached_property
    def classes(self):
        return sorted({self.uf.find(k) for k in list(self.uf.parent)}, key=repr)

    @cached_property
    def free(self):
        return [c for c in self.classes if c not in self.uf.fixed]

    def admissible(self, assignment) -> bool:
        for op, s, d in self.casts:
            ws, wd = assignment[self.cls(s)], assignment[self.cls(d)]
            if op == "trunc" and not ws > wd:
                return False
            if op != "trunc" and not ws < wd:
                return False
        return True

    def assignments(self, widths):
        """All admissible class->width maps, free classes drawn from ``widths``."""
        widths = sorted(set(widths))
        base = {c: w for c, w in self.uf.fixed.items()}
        for combo in itertools.product(widths, repeat=len(self.free)):
            a = dict(base)
            a.update(zip(self.free, combo))
            if self.admissible(a):
                yield a

    def width(self, key, assignment) -> int:
        return assignment[self.cls(key)]

    def bind(self, observed) -> dict | None:
        """Class->width map consistent with observed key->width, or None."""
        a = dict(self.uf.fixed)
        for key, w in observed.items():
            c = self.cls(key)
            if a.setdefault(c, w) != w:
                return None
        return a


def _instr_constraints(uf, casts, ins: PInstr, side: str, i: int):
    where = f"%{ins.name}"
    res = ("v", ins.name)
    uf.find(res)
    keys = [operand_key(o, side, i, j) for j, o in enumerate(ins.operands)]
    for k, o in zip(keys, ins.operands):
        uf.find(k)
        if isinstance(o, PLit) and o.width is not None:
            uf.fix(k, o.width, where)
    op = ins.op
    if op == "icmp":
        uf.union(keys[0], keys[1], where)
        uf.fix(res, 1, where)
        if ins.width is not None:
            uf.fix(keys[0], ins.width, where)
    elif op == "select":
        uf.fix(keys[0], 1, where)
        uf.union(res, keys[1], where)
        uf.union(res, keys[2], where)
    elif op in CAST_OPS:
        if ins.width is None:
            raise RuleTypeError(f"{where}: {op} needs an explicit result width")
        casts.append((op, keys[0], res))
    else:
        uf.union(res, keys[0], where)
        uf.union(res, keys[1], where)
    if ins.width is not None and op != "icmp":
        uf.fix(res, ins.width, where)


@dataclass(frozen=True)
class Rule:
    """A declarative rewrite ``lhs => rhs`` with an optional precondition.

    The LHS root is its last instruction.  The RHS either redefines the
    root name with an instruction, or (``replacement``) maps the root to an
    existing operand, which makes the rule a pure deletion.
    """

    name: str
    lhs: tuple
    rhs: tuple
    pre: object = None
    replacement: object = None

    @property
    def root(self) -> str:
        return self.lhs[-1].name

    @cached_property
    def lhs_defs(self) -> dict[str, PInstr]:
        return {i.name: i for i in self.lhs}

    @cached_property
    def inputs(self) -> list[str]:
        """LHS input variables in first-appearance order."""
        seen: list[str] = []
        defined = set()
        for ins in self.lhs:
            for o in ins.operands:
                if isinstance(o, PVar) and o.name not in defined and o.name not in seen:
                    seen.append(o.name)
            defined.add(ins.name)
        return seen

    @cached_property
    def symbols(self) -> list[str]:
        seen: list[str] = []
        for ins in self.lhs:
            for o in ins.operands:
                if isinstance(o, PSym) and o.name not in seen:
                    seen.append(o.name)
        return seen

    @cached_property
    def typing(self) -> RuleTyping:
        uf, casts = _UnionFind(), []
        for i, ins in enumerate(self.lhs):
            _instr_constraints(uf, casts, ins, "lhs", i)
        for i, ins in enumerate(self.rhs):
            _instr_constraints(uf, casts, ins, "rhs", i)
        if self.replacement is not None:
            k = operand_key(self.replacement, "alias", 0, 0)
            uf.find(k)
            if isinstance(self.replacement, PLit) and self.replacement.width:
                uf.fix(k, self.replacement.width, "replacement")
            uf.union(("v", self.root), k, f"%{self.root}")
        return RuleTyping(uf, casts)

    @property
    def monomorphic(self) -> bool:
        return not self.typing.free

    def lhs_flag_count(self) -> int:
        return sum(len(i.flags) for i in self.lhs)

    def __str__(self):
        return format_rule(self)


def format_rule(r: Rule) -> str:
    lines = [f"name: {r.name}"]
    if r.pre is not None and r.pre != P.TRUE:
        lines.append("pre: " + P.format_pred(r.pre))
    lines += [str(i) for i in r.lhs]
    lines.append("=>")
    lines += [str(i) for i in r.rhs]
    if r.replacement is not None:
        lines.append(f"%{r.root} = {r.replacement}")
    return "\n".join(lines) + "\n"


def format_rules(rules) -> str:
    return "\n".join(format_rule(r) for r in rules)


def check_wellformed(r: Rule) -> list[Diagnostic]:
    """Structured diagnostics; never raises."""
    diags: list[Diagnostic] = []

    def err(msg):
        diags.append(Diagnostic("error", msg))

    if not r.lhs:
        err("empty LHS")
        return diags
    lhs_names: set[str] = set()
    inputs = set(r.inputs)
    for ins in r.lhs:
        if ins.op not in OPCODES:
            err(f"%{ins.name}: unknown opcode {ins.op}")
            continue
        if len(ins.operands) != operand_arity(ins.op):
            err(f"%{ins.name}: {ins.op} takes {operand_arity(ins.op)} operands")
        if ins.flags and ins.op not in FLAG_OPS:
            err(f"%{ins.name}: flags not allowed on {ins.op}")
        if ins.name in lhs_names or ins.name in inputs:
            err(f"%{ins.name} defined twice (or used before its definition) on the LHS")
        lhs_names.add(ins.name)
    used = {o.name for ins in r.lhs for o in ins.operands if isinstance(o, PVar)}
    for ins in r.lhs[:-1]:
        if ins.name not in used:
            err(f"%{ins.name} is not used by the LHS root; the LHS must have a single root")
    clash = set(r.symbols) & (inputs | lhs_names)
    if clash:
        err(f"names used both as symbol and value: {sorted(clash)}")

    bound = inputs | lhs_names
    syms = set(r.symbols)
    rhs_names: set[str] = set()
    root_defined = r.replacement is not None
    for k, ins in enumerate(r.rhs):
        if ins.op not in OPCODES:
            err(f"%{ins.name}: unknown opcode {ins.op}")
            continue
        if len(ins.operands) != operand_arity(ins.op):
            err(f"%{ins.name}: {ins.op} takes {operand_arity(ins.op)} operands")
        if ins.flags and ins.op not in FLAG_OPS:
            err(f"%{ins.name}: flags not allowed on {ins.op}")
        for o in ins.operands:
            if isinstance(o, PVar) and o.name not in bound | rhs_names:
                err(f"unbound symbol %{o.name} on the RHS")
            if isinstance(o, PSym) and o.name not in syms:
                err(f"unbound symbol {o.name} on the RHS")
        if ins.name == r.root:
            if k != len(r.rhs) - 1 or r.replacement is not None:
                err(f"RHS must define the root %{r.root} last")
            root_defined = True
        elif ins.name in bound or ins.name in rhs_names:
            err(f"RHS value %{ins.name} must be fresh")
        rhs_names.add(ins.name)
    rep = r.replacement
    if isinstance(rep, PVar) and rep.name not in bound | rhs_names:
        err(f"unbound symbol %{rep.name} on the RHS")
    if isinstance(rep, PSym) and rep.name not in syms:
        err(f"unbound symbol {rep.name} on the RHS")
    if not root_defined:
        err(f"root %{r.root} does not appear on the RHS")
    rhs_used = {o.name for ins in r.rhs for o in ins.operands if isinstance(o, PVar)}
    if isinstance(rep, PVar):
        rhs_used.add(rep.name)
    for ins in r.rhs:
        if ins.name != r.root and ins.name not in rhs_used:
            diags.append(Diagnostic("warning", f"RHS value %{ins.name} is unused"))

    if any(d.level == "error" for d in diags):
        return diags
    try:
        t = r.typing
    except RuleTypeError as e:
        err(f"type error: {e}")
        return diags
    lhs_classes = {t.cls(("v", n)) for n in bound} | {t.cls(("s", s)) for s in syms}
    for ins in r.rhs:
        c = t.cls(("v", ins.name))
        if c not in lhs_classes and c not in t.uf.fixed:
            err(f"width of RHS value %{ins.name} is not determined by the LHS")
    if r.pre is not None:
        sym_w = {s: t.uf.fixed.get(t.cls(("s", s))) for s in syms}
        for msg in P.check_pred_types(r.pre, sym_w, bound):
            err(msg)
        if not any(d.level == "error" for d in diags):
            if not P.symbols(r.pre) and not P.width_vars(r.pre):
                try:
                    if not P.eval_precondition(r.pre, {}, {}):
                        diags.append(Diagnostic("warning", "precondition is always false: vacuous rule"))
                except P.PredError as e:
                    err(str(e))
    return diags


def lhs_functions_params(r: Rule, assignment) -> list[Var]:
    t = r.typing
    params = [Var(v, t.width(("v", v), assignment)) for v in r.inputs]
    params += [Var(s, t.width(("s", s), assignment)) for s in r.symbols]
    return params


def _concrete_operand(o, key, t, assignment, env):
    w = t.width(key, assignment)
    if isinstance(o, PLit):
        return Const(o.value, w)
    if isinstance(o, PVar):
        return env[o.name]
    return env[o.name]


def rule_functions(r: Rule, assignment) -> tuple[Function, Function]:
    """LHS and RHS as functions of (inputs..., symbols...) at one width assignment."""
    t = r.typing
    params = lhs_functions_params(r, assignment)
    env = {p.name: p for p in params}

    def build(instrs, side, env):
        body = []
        for i, ins in enumerate(instrs):
            ops = tuple(
                _concrete_operand(o, operand_key(o, side, i, j), t, assignment, env)
                for j, o in enumerate(ins.operands)
            )
            w = t.width(("v", ins.name), assignment)
            c = Instruction(ins.name, ins.op, w, ops, ins.flags, ins.cond)
            env[ins.name] = c.result
            body.append(c)
        return body

    lenv = dict(env)
    lbody = build(r.lhs, "lhs", lenv)
    lhs = Function(f"{r.name}.lhs", tuple(params), tuple(lbody), (lenv[r.root],))
    renv = dict(lenv)
    renv.pop(r.root)
    # RHS names may shadow LHS intermediates only if fresh; keep LHS values visible
    rbody = list(lbody[:-1])
    rbody += build(r.rhs, "rhs", renv)
    if r.replacement is not None:
        rep = _concrete_operand(r.replacement, operand_key(r.replacement, "alias", 0, 0),
                                t, assignment, renv)
    else:
        rep = renv[r.root]
    rhs = Function(f"{r.name}.rhs", tuple(params), tuple(rbody), (rep,))
    return lhs, rhs


def binding_assignment(r: Rule, binding) -> dict:
    """Width assignment implied by a binding of rule names to IR operands."""
    observed = {}
    for name, v in binding.items():
        key = ("s", name) if name in r.symbols else ("v", name)
        observed[key] = v.width
    a = r.typing.bind(observed)
    if a is None:
        raise RuleTypeError(f"binding is inconsistent with the widths of {r.name}")
    return a


def instantiate_rhs(r: Rule, binding, taken=()) -> tuple[list[Instruction], object]:
    """Concrete RHS instructions for a match.

    ``binding`` maps LHS inputs, LHS instruction names and symbols to the
    matched IR operands (the root maps to the matched root's result).
    Returns ``(instructions, replacement)``: the replacement is the operand
    that stands for the root afterwards.  Every RHS result gets a fresh
    name drawn from outside ``taken`` except the root, which keeps the
    matched root's name.
    """
    t = r.typing
    a = binding_assignment(r, binding)
    root_var = binding[r.root]
    names = NameSupply(set(taken))
    names.taken.update(v.name for v in binding.values() if isinstance(v, Var))
    env = dict(binding)
    out = []
    for i, ins in enumerate(r.rhs):
        ops = []
        for j, o in enumerate(ins.operands):
            if isinstance(o, PLit):
                ops.append(Const(o.value, t.width(("l", "rhs", i, j), a)))
            else:
                ops.append(env[o.name])
        w = t.width(("v", ins.name), a)
        if ins.name == r.root:
            name = root_var.name
        else:
            name = ins.name if ins.name not in names.taken else names.fresh(ins.name)
            names.taken.add(name)
        c = Instruction(name, ins.op, w, tuple(ops), ins.flags, ins.cond)
        env[ins.name] = c.result
        out.append(c)
    if r.replacement is not None:
        rep = r.replacement
        if isinstance(rep, PLit):
            return out, Const(rep.value, t.width(("l", "alias", 0, 0), a))
        return out, env[rep.name]
    return out, env[r.root]


def check_binding_pre(r: Rule, binding) -> bool:
    """Whether the precondition holds for a binding of IR operands."""
    if r.pre is None:
        return True
    consts = {s: binding[s] for s in r.symbols}
    widths = {n: v.width for n, v in binding.items() if n not in consts}
    return P.eval_precondition(r.pre, consts, widths)


def with_rhs(r: Rule, rhs, name: str | None = None) -> Rule:
    return Rule(name or r.name, r.lhs, tuple(rhs), r.pre, r.replacement)


def validate_width_set(widths) -> list[int]:
    ws = sorted(set(int(w) for w in widths))
    if not ws:
        raise ValueError("width set is empty")
    for w in ws:
        check_width(w)
    return ws


__all__ = [
    "RuleError", "RuleSyntaxError", "UnboundError", "RuleTypeError", "PVar", "PSym", "PLit",
    "PInstr", "Rule", "Diagnostic", "RuleTyping", "check_wellformed", "rule_functions",
    "instantiate_rhs", "binding_assignment", "check_binding_pre", "format_rule",
    "format_rules", "with_rhs", "validate_width_set", "IRError",
]
