"""Exhaustive refinement checking by enumerating the whole input space.

Constants are enumerated first and filtered by the precondition, then the
inputs are enumerated for every surviving constant tuple.  The query is
feasible when both the constant space and the (surviving tuples x inputs)
space fit in ``max_bits`` bits.  Pure and/or/xor queries that are too
big are checked bit-sliced instead (see ``check_bitwise``).
"""

from __future__ import annotations

import numpy as np

from ..ir import dtype_for, eval_arrays
from ..rules.pred import eval_pred_arrays
from .verdict import Query, Unknown, Valid, counterexample_from_args

CHUNK = 1 << 20
BITWISE_OPS = frozenset({"and", "or", "xor"})


class BudgetExceeded(Exception):
    pass


def _decode(flat, widths):
    """Split flat indices into per-field arrays; the first field is most significant."""
    out = []
    for w in reversed(widths):
        out.append((flat & ((1 << w) - 1)).astype(dtype_for(w)))
        flat = flat >> w
    return out[::-1]


def _bad_lanes(q: Query, args) -> np.ndarray:
    lres = eval_arrays(q.lhs, args)
    rres = eval_arrays(q.rhs, args)
    bad = None
    for (lv, lp), (rv, rp) in zip(lres, rres):
        b = ~lp & (rp | np.asarray(lv != rv, dtype=bool))
        bad = b if bad is None else bad | b
    return bad


def passing_constants(q: Query, max_bits: int = 24, use_pre: bool = True) -> np.ndarray:
    """Indices of constant tuples (flat, first constant most significant) satisfying pre."""
    cw = [p.width for p in q.consts]
    bits = sum(cw)
    if bits > max_bits:
        raise BudgetExceeded(f"{bits} bits of symbolic constants exceed {max_bits}")
    idx = np.arange(1 << bits, dtype=np.int64)
    if not cw or q.pre is None or not use_pre:
        return idx
    cols = _decode(idx, cw)
    env = {p.name: (c, p.width) for p, c in zip(q.consts, cols)}
    keep = np.broadcast_to(eval_pred_arrays(q.pre, env, q.var_widths), idx.shape)
    return idx[keep]


def _lanes(q: Query, const_idx: np.ndarray, flat: np.ndarray):
    iw = [p.width for p in q.inputs]
    cw = [p.width for p in q.consts]
    ibits = sum(iw)
    k, j = flat >> ibits, flat & ((1 << ibits) - 1)
    args = _decode(j, iw)
    if cw:
        args += _decode(const_idx[k], cw)
    return k, j, args


def is_bitwise(q: Query) -> bool:
    """True when every instruction is and/or/xor over one width.

    Such programs are poison-free and bit-parallel: output bit i depends
    only on bit i of each input (and of the constants).
    """
    ws = {p.width for p in q.inputs} | {o.width for f in (q.lhs, q.rhs) for o in f.rets}
    ins = q.lhs.body + q.rhs.body
    return len(ws) == 1 and all(i.op in BITWISE_OPS and i.width in ws for i in ins)


def check_bitwise(q: Query, consts: np.ndarray, max_bits: int = 24):
    """Exhaustive check of a bitwise query, one bit position at a time.

    For each bit i, inputs range over {0, 1 << i}.  A mismatch at bit i on
    some input x reappears on the lane whose inputs copy x's bit i, and
    every lane is itself a real input, so this is exact.
    """
    n = len(q.inputs)
    w = q.inputs[0].width if n else q.lhs.rets[0].width
    cw = [p.width for p in q.consts]
    lanes = len(consts) * w << n
    if lanes > (1 << max_bits):
        raise BudgetExceeded(f"{lanes} bit-sliced lanes exceed 2^{max_bits}")
    flat = np.arange(lanes, dtype=np.int64)
    combo, rest = flat & ((1 << n) - 1), flat >> n
    bit, k = rest % w, rest // w
    dt = dtype_for(w)
    args = [(((combo >> j) & 1) << bit).astype(dt) for j in range(n)]
    if cw:
        args += _decode(consts[k], cw)
    bad = _bad_lanes(q, args)
    if bad.any():
        pos = int(np.argmax(bad))
        return counterexample_from_args(q, [int(a[pos]) for a in args])
    return Valid([q.label], ["exhaustive"])


def check(q: Query, max_bits: int = 24):
    """Valid / Counterexample by total enumeration; raises BudgetExceeded."""
    consts = passing_constants(q, max_bits)
    ibits = sum(p.width for p in q.inputs)
    total = len(consts) << ibits
    if total > (1 << max_bits) and is_bitwise(q):
        return check_bitwise(q, consts, max_bits)
    if total > (1 << max_bits):
        raise BudgetExceeded(
            f"{len(consts)} constant tuple(s) x {ibits} input bits exceed 2^{max_bits}"
        )
    for start in range(0, total, CHUNK):
        flat = np.arange(start, min(total, start + CHUNK), dtype=np.int64)
        _, _, args = _lanes(q, consts, flat)
        bad = _bad_lanes(q, args)
        if bad.any():
            pos = int(np.argmax(bad))
            return counterexample_from_args(q, [int(a[pos]) for a in args])
    return Valid([q.label], ["exhaustive"])


def valid_constant_mask(q: Query, max_bits: int = 24) -> tuple[np.ndarray, np.ndarray]:
    """For every constant tuple (ignoring pre): does refinement hold for all inputs?

    Returns ``(tuples, valid)`` where ``tuples`` has one row per tuple.
    """
    cw = [p.width for p in q.consts]
    ibits = sum(p.width for p in q.inputs)
    cbits = sum(cw)
    if cbits + ibits > max_bits:
        raise BudgetExceeded(f"{cbits + ibits} bits exceed {max_bits}")
    consts = np.arange(1 << cbits, dtype=np.int64)
    bad_tuple = np.zeros(len(consts), dtype=bool)
    total = len(consts) << ibits
    for start in range(0, total, CHUNK):
        flat = np.arange(start, min(total, start + CHUNK), dtype=np.int64)
        k, _, args = _lanes(q, consts, flat)
        bad = _bad_lanes(q, args)
        np.logical_or.at(bad_tuple, k[bad], True)
    tuples = np.stack(_decode(consts, cw), axis=1).astype(np.int64) if cw else np.zeros((1, 0), np.int64)
    return tuples, ~bad_tuple


class ExhaustiveBackend:
    """Default backend; hands oversized queries to ``fallback`` if one is set."""

    name = "exhaustive"

    def __init__(self, max_bits: int = 24, fallback=None):
        self.max_bits = max_bits
        self.fallback = fallback

    def feasible(self, q: Query) -> bool:
        try:
            consts = passing_constants(q, self.max_bits)
        except BudgetExceeded:
            return False
        return (len(consts) << sum(p.width for p in q.inputs)) <= (1 << self.max_bits)

    def check(self, q: Query):
        try:
            return check(q, self.max_bits)
        except BudgetExceeded as e:
            if self.fallback is not None:
                return self.fallback.check(q)
            return Unknown(f"exhaustive budget exceeded: {e}", q.label)
