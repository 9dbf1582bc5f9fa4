"""Executable semantics with poison.

The evaluator works on numpy arrays so a whole input space (or a batch of
counterexamples) is evaluated in one pass.  Values are stored unsigned in
``[0, 2**w)``; widths up to 31 bits use int64 lanes, wider values fall back
to object arrays of Python ints so products never overflow.
"""

from __future__ import annotations

import numpy as np

from .core import CAST_OPS, Const, Function, Instruction, IRError, Var, mask


class _Poison:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "poison"

    def __reduce__(self):
        return (_Poison, ())


POISON = _Poison()


class EvalError(IRError):
    pass


def dtype_for(w: int):
    return np.int64 if w <= 31 else object


def lane(values, w: int) -> np.ndarray:
    """Coerce ints (or an array of ints) to the lane representation for ``w``."""
    a = np.asarray(values, dtype=dtype_for(w))
    return a & mask(w)


def _b(x) -> np.ndarray:
    return np.asarray(x, dtype=bool)


def _signed(a, w: int):
    return a - ((a >> (w - 1)) & 1) * (1 << w)


def _in_signed_range(s, w: int):
    return _b((s >= -(1 << (w - 1))) & (s <= (1 << (w - 1)) - 1))


def eval_instruction(ins: Instruction, args) -> tuple:
    """Evaluate one instruction; ``args`` is a list of (value, poison) pairs."""
    op, w = ins.op, ins.width
    m = mask(w)
    poison = args[0][1]
    for _, p in args[1:]:
        poison = poison | p
    if op in CAST_OPS:
        a = args[0][0]
        src = ins.operands[0].width
        if op == "zext":
            r = np.asarray(a).astype(dtype_for(w))
        elif op == "sext":
            r = np.asarray(_signed(a, src)).astype(dtype_for(w)) & m
        else:
            r = np.asarray(a & m).astype(dtype_for(w))
        return r, poison
    if op == "select":
        c, a, b = (v for v, _ in args)
        return np.where(_b(c == 1), a, b).astype(dtype_for(w)), poison
    a, b = args[0][0], args[1][0]
    if op == "icmp":
        ow = ins.operands[0].width
        cond = ins.cond
        if cond == "eq":
            r = a == b
        elif cond == "ne":
            r = a != b
        elif cond == "ult":
            r = a < b
        elif cond == "ule":
            r = a <= b
        elif cond == "slt":
            r = _signed(a, ow) < _signed(b, ow)
        else:
            r = _signed(a, ow) <= _signed(b, ow)
        return _b(r).astype(np.int64), poison
    flags = ins.flags
    if op == "add":
        r = a + b
        if "nuw" in flags:
            poison = poison | _b(r > m)
        if "nsw" in flags:
            poison = poison | ~_in_signed_range(_signed(a, w) + _signed(b, w), w)
        r = r & m
    elif op == "sub":
        r = (a - b) & m
        if "nuw" in flags:
            poison = poison | _b(a < b)
        if "nsw" in flags:
            poison = poison | ~_in_signed_range(_signed(a, w) - _signed(b, w), w)
    elif op == "mul":
        r = a * b
        if "nuw" in flags:
            poison = poison | _b(r > m)
        if "nsw" in flags:
            poison = poison | ~_in_signed_range(_signed(a, w) * _signed(b, w), w)
        r = r & m
    elif op == "and":
        r = a & b
    elif op == "or":
        r = a | b
    elif op == "xor":
        r = a ^ b
    elif op in ("shl", "lshr", "ashr"):
        big = _b(b >= w)
        poison = poison | big
        s = np.where(big, 0, b)
        if op == "shl":
            r = (a << s) & m
            if "nuw" in flags:
                poison = poison | _b((r >> s) != a)
            if "nsw" in flags:
                poison = poison | _b((_signed(r, w) >> s) != _signed(a, w))
        elif op == "lshr":
            r = a >> s
        else:
            r = (_signed(a, w) >> s) & m
    else:
        raise EvalError(f"cannot evaluate {op}")
    return np.asarray(r).astype(dtype_for(w)), poison


def _const(c: Const):
    return np.asarray(c.value, dtype=dtype_for(c.width)), np.False_


def eval_arrays(f: Function, inputs, return_env: bool = False):
    """Evaluate ``f`` lane-wise.

    ``inputs`` holds one array per parameter (already reduced to its
    width); arrays broadcast against each other.  Returns a list of
    ``(values, poison)`` pairs, one per returned operand, broadcast to the
    common input shape.
    """
    if len(inputs) != len(f.params):
        raise EvalError(f"@{f.name} takes {len(f.params)} inputs, got {len(inputs)}")
    env = {}
    shapes = []
    for p, x in zip(f.params, inputs):
        x = np.asarray(x)
        shapes.append(x.shape)
        env[p.name] = (x, np.zeros(x.shape, dtype=bool))
    shape = np.broadcast_shapes(*shapes) if shapes else ()

    def get(o):
        return env[o.name] if isinstance(o, Var) else _const(o)

    for ins in f.body:
        env[ins.name] = eval_instruction(ins, [get(o) for o in ins.operands])
    out = []
    for o in f.rets:
        v, p = get(o)
        out.append((np.broadcast_to(v, shape), np.broadcast_to(_b(p), shape)))
    if return_env:
        return out, env
    return out


def evaluate(f: Function, inputs) -> tuple:
    """Run ``f`` on concrete inputs.

    Returns one entry per returned value: an unsigned int, or POISON.
    Inputs may be given signed or unsigned but must fit the parameter
    width.
    """
    if len(inputs) != len(f.params):
        raise EvalError(f"@{f.name} takes {len(f.params)} inputs, got {len(inputs)}")
    arrays = []
    for p, x in zip(f.params, inputs):
        if x is POISON:
            raise EvalError("inputs are never poison")
        x = int(x)
        if not -(1 << (p.width - 1)) <= x < (1 << p.width):
            raise EvalError(f"input {x} does not fit i{p.width} for %{p.name}")
        arrays.append(lane([x], p.width))
    res = []
    for v, p in eval_arrays(f, arrays):
        res.append(POISON if bool(p[0]) else int(v[0]))
    return tuple(res)
