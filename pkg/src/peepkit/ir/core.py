"""SSA data types for the single-block bit-vector IR."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Union

MAX_WIDTH = 64

BINARY_OPS = ("add", "sub", "mul", "and", "or", "xor", "shl", "lshr", "ashr")
CAST_OPS = ("zext", "sext", "trunc")
OPCODES = BINARY_OPS + ("icmp", "select") + CAST_OPS

COMMUTATIVE_OPS = frozenset({"add", "mul", "and", "or", "xor"})
COMMUTATIVE_CONDS = frozenset({"eq", "ne"})
FLAG_OPS = frozenset({"add", "sub", "mul", "shl"})
FLAG_ORDER = ("nsw", "nuw")

ICMP_CONDS = ("eq", "ne", "ult", "slt", "ule", "sle")
# remaining orderings are rewritten by swapping operands
ICMP_SWAPPED = {"ugt": "ult", "uge": "ule", "sgt": "slt", "sge": "sle"}


class IRError(Exception):
    """Base class for malformed IR."""


class ParseError(IRError):
    def __init__(self, msg: str, line: int = 0, col: int = 0):
        self.line = line
        self.col = col
        super().__init__(f"{line}:{col}: {msg}" if line else msg)


class SSAError(IRError):
    pass


class WidthError(IRError):
    pass


def check_width(w: int) -> int:
    if not isinstance(w, int) or not 1 <= w <= MAX_WIDTH:
        raise WidthError(f"bit width must be in 1..{MAX_WIDTH}, got {w!r}")
    return w


def mask(w: int) -> int:
    return (1 << w) - 1


def to_signed(v: int, w: int) -> int:
    v &= mask(w)
    return v - (1 << w) if v >> (w - 1) else v


def normalize_flags(flags) -> tuple[str, ...]:
    flags = set(flags)
    bad = flags - set(FLAG_ORDER)
    if bad:
        raise IRError(f"unknown flags {sorted(bad)}")
    return tuple(f for f in FLAG_ORDER if f in flags)


@dataclass(frozen=True)
class Const:
    """A literal; ``value`` is stored unsigned, reduced modulo 2**width."""

    value: int
    width: int

    def __post_init__(self):
        check_width(self.width)
        object.__setattr__(self, "value", self.value & mask(self.width))

    @property
    def signed(self) -> int:
        return to_signed(self.value, self.width)

    def __str__(self):
        return str(self.signed)


@dataclass(frozen=True)
class Var:
    """A reference to a parameter or an instruction result."""

    name: str
    width: int

    def __str__(self):
        return "%" + self.name


Operand = Union[Var, Const]


def is_commutative(op: str, cond: str | None = None) -> bool:
    if op == "icmp":
        return cond in COMMUTATIVE_CONDS
    return op in COMMUTATIVE_OPS


def operand_arity(op: str) -> int:
    if op in BINARY_OPS or op == "icmp":
        return 2
    if op == "select":
        return 3
    if op in CAST_OPS:
        return 1
    raise IRError(f"unknown opcode {op!r}")


@dataclass(frozen=True)
class Instruction:
    name: str
    op: str
    width: int
    operands: tuple[Operand, ...]
    flags: tuple[str, ...] = ()
    cond: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "operands", tuple(self.operands))
        object.__setattr__(self, "flags", normalize_flags(self.flags))
        typecheck(self)

    @property
    def result(self) -> Var:
        return Var(self.name, self.width)

    @property
    def commutative(self) -> bool:
        return is_commutative(self.op, self.cond)

    @property
    def opcode(self) -> str:
        return f"icmp {self.cond}" if self.op == "icmp" else self.op

    def with_operands(self, operands) -> "Instruction":
        return replace(self, operands=tuple(operands))


def typecheck(ins: Instruction) -> None:
    """Raise WidthError (or IRError) unless the instruction is well typed."""
    op, w, ops = ins.op, ins.width, ins.operands
    check_width(w)
    if op not in OPCODES:
        raise IRError(f"unknown opcode {op!r}")
    if len(ops) != operand_arity(op):
        raise IRError(f"{op} takes {operand_arity(op)} operands, got {len(ops)}")
    if ins.flags and op not in FLAG_OPS:
        raise IRError(f"flags are not allowed on {op}")
    if op == "icmp":
        if ins.cond not in ICMP_CONDS:
            raise IRError(f"unknown icmp predicate {ins.cond!r}")
        if w != 1:
            raise WidthError("icmp produces i1")
        if ops[0].width != ops[1].width:
            raise WidthError(f"icmp operand widths differ: i{ops[0].width} vs i{ops[1].width}")
        return
    if ins.cond is not None:
        raise IRError(f"{op} takes no predicate")
    if op == "select":
        if ops[0].width != 1:
            raise WidthError("select condition must be i1")
        if ops[1].width != w or ops[2].width != w:
            raise WidthError(f"select arms must both be i{w}")
        return
    if op in CAST_OPS:
        src = ops[0].width
        if op == "trunc" and not src > w:
            raise WidthError(f"trunc must narrow (i{src} -> i{w})")
        if op != "trunc" and not src < w:
            raise WidthError(f"{op} must widen (i{src} -> i{w})")
        return
    for o in ops:
        if o.width != w:
            raise WidthError(f"{op} i{w} has an i{o.width} operand")


@dataclass(frozen=True)
class Function:
    name: str
    params: tuple[Var, ...]
    body: tuple[Instruction, ...]
    rets: tuple[Operand, ...]

    def __post_init__(self):
        for attr in ("params", "body", "rets"):
            object.__setattr__(self, attr, tuple(getattr(self, attr)))
        self._validate()

    def _validate(self):
        if not self.rets:
            raise SSAError("function must return at least one value")
        defined: dict[str, int] = {}
        for p in self.params:
            check_width(p.width)
            if p.name in defined:
                raise SSAError(f"%{p.name} defined twice")
            defined[p.name] = p.width

        def use(o: Operand, where: str):
            if isinstance(o, Var):
                if o.name not in defined:
                    raise SSAError(f"%{o.name} used before definition in {where}")
                if defined[o.name] != o.width:
                    raise WidthError(f"%{o.name} is i{defined[o.name]}, used as i{o.width}")

        for ins in self.body:
            for o in ins.operands:
                use(o, "%" + ins.name)
            if ins.name in defined:
                raise SSAError(f"%{ins.name} defined twice")
            defined[ins.name] = ins.width
        for o in self.rets:
            use(o, "ret")

    @cached_property
    def widths(self) -> dict[str, int]:
        d = {p.name: p.width for p in self.params}
        d.update((i.name, i.width) for i in self.body)
        return d

    @cached_property
    def index(self) -> dict[str, int]:
        """Instruction name -> position in body."""
        return {ins.name: k for k, ins in enumerate(self.body)}

    def definition(self, name: str) -> Instruction | None:
        k = self.index.get(name)
        return None if k is None else self.body[k]

    def use_counts(self) -> dict[str, int]:
        counts = dict.fromkeys(self.widths, 0)
        for ins in self.body:
            for o in ins.operands:
                if isinstance(o, Var):
                    counts[o.name] += 1
        for o in self.rets:
            if isinstance(o, Var):
                counts[o.name] += 1
        return counts

    def replace(self, **kw) -> "Function":
        return replace(self, **kw)

    def __str__(self):
        from .text import print_function

        return print_function(self)


def substitute(ins: Instruction, mapping: dict[str, Operand]) -> Instruction:
    """Rewrite operands of ``ins`` that name a key of ``mapping``."""
    new = [mapping.get(o.name, o) if isinstance(o, Var) else o for o in ins.operands]
    if all(a is b for a, b in zip(new, ins.operands)):
        return ins
    return ins.with_operands(new)


def fresh_name(taken, stem: str = "") -> str:
    """Smallest ``stem<N>`` not in ``taken`` (N counts from 0)."""
    k = 0
    while f"{stem}{k}" in taken:
        k += 1
    return f"{stem}{k}"


@dataclass
class NameSupply:
    taken: set = field(default_factory=set)

    def fresh(self, stem: str = "") -> str:
        n = fresh_name(self.taken, stem)
        self.taken.add(n)
        return n
