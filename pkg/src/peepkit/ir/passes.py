"""Function-level passes: dead-code elimination, cost, rescaling, statistics."""

from __future__ import annotations

from collections import Counter

from .core import Const, Function, Instruction, Var, WidthError, check_width, substitute


def dce(f: Function) -> tuple[Function, int]:
    """Remove every instruction whose result is not (transitively) used.

    A single backward sweep reaches the fixpoint because the body is in
    topological order.
    """
    live = {o.name for o in f.rets if isinstance(o, Var)}
    kept = []
    for ins in reversed(f.body):
        if ins.name in live:
            kept.append(ins)
            live.update(o.name for o in ins.operands if isinstance(o, Var))
    removed = len(f.body) - len(kept)
    if not removed:
        return f, 0
    return f.replace(body=tuple(reversed(kept))), removed


def cost(f: Function) -> int:
    return len(f.body)


def rescale(f: Function, width: int) -> Function:
    """Re-type ``f`` so its single non-i1 width becomes ``width``.

    Literals keep their signed value, reduced modulo the new width.  Only
    defined for functions with one non-boolean width (no casts).
    """
    check_width(width)
    wide = {w for w in f.widths.values() if w != 1}
    for ins in f.body:
        wide.update(o.width for o in ins.operands if o.width != 1)
    if len(wide) > 1:
        raise WidthError(f"@{f.name} mixes widths {sorted(wide)}; cannot rescale")
    if not wide or wide == {width}:
        return f
    (old,) = wide

    def w(x):
        return width if x == old else x

    def op(o):
        if isinstance(o, Const):
            return Const(o.signed, w(o.width))
        return Var(o.name, w(o.width))

    params = tuple(Var(p.name, w(p.width)) for p in f.params)
    body = tuple(
        Instruction(i.name, i.op, w(i.width), tuple(op(o) for o in i.operands), i.flags, i.cond)
        for i in f.body
    )
    return Function(f.name, params, body, tuple(op(o) for o in f.rets))


def replace_uses(f: Function, name: str, new) -> Function:
    """Replace every use of ``%name`` (instructions and returns) by ``new``."""
    m = {name: new}
    body = tuple(substitute(i, m) for i in f.body)
    rets = tuple(new if isinstance(o, Var) and o.name == name else o for o in f.rets)
    return f.replace(body=body, rets=rets)


def histogram(funcs) -> Counter:
    c = Counter()
    for f in funcs:
        c.update(i.opcode for i in f.body)
    return c


def depth_map(f: Function) -> dict[str, int]:
    """Longest operand-chain length from a parameter to each instruction."""
    d = {p.name: 0 for p in f.params}
    for ins in f.body:
        d[ins.name] = 1 + max(
            (d[o.name] for o in ins.operands if isinstance(o, Var)), default=0
        )
    return d
