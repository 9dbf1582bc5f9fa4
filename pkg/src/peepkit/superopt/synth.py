"""CEGIS synthesis of cheaper replacements for a slice.

Candidate programs are enumerated once, in increasing cost; within a cost
level, programs with 0, 1, then 2 constant holes.  A candidate must agree
with the slice on every counterexample collected so far (holes are filled
by enumeration at narrow widths, by a solver query otherwise); survivors
are verified, and a failed verification adds its counterexample to the set
before enumeration resumes with the next candidate.  Because every program
skipped earlier already disagreed with a subset of the current set, the
single pass is complete for the grammar and the first verified program is
a cheapest one.
"""

from __future__ import annotations

import logging
import random
import time
from dataclasses import dataclass, field

import numpy as np

from ..ir import BINARY_OPS, COMMUTATIVE_OPS, ICMP_CONDS, Const, Function, Instruction, Var, mask
from ..ir.semantics import POISON, dtype_for, eval_arrays, eval_instruction
from ..verify import Query
from ..verify.smt import SolverBackend, SolverError, find_solver

log = logging.getLogger(__name__)

_SELF_TRIVIAL = {"and", "or", "xor", "sub"}  # op(a, a) is a leaf


@dataclass
class SynthConfig:
    max_cost: int = 2
    max_holes: int = 2
    n_random: int = 8
    seed: int = 0
    allow_select_icmp: bool = False
    hole_enum_max_width: int = 8
    max_solver_queries: int = 64
    time_limit: float | None = None
    ops: tuple = BINARY_OPS

    def opcodes(self):
        out = [(op, None) for op in self.ops]
        if self.allow_select_icmp:
            out += [("icmp", c) for c in ICMP_CONDS] + [("select", None)]
        return out


def literal_pool(w: int) -> list[int]:
    """0, 1, -1, width-1 and the sign bit, reduced to ``w`` bits, deduplicated."""
    out = []
    for v in (0, 1, -1, w - 1, 1 << (w - 1)):
        v &= mask(w)
        if v not in out:
            out.append(v)
    return out


def seed_vectors(params, n_random: int, seed: int) -> list[tuple[int, ...]]:
    out = []
    for kind in ("0", "1", "-1", "min", "max"):
        row = []
        for p in params:
            w = p.width
            row.append({"0": 0, "1": 1 & mask(w), "-1": mask(w), "min": 1 << (w - 1),
                        "max": mask(w) >> 1}[kind])
        out.append(tuple(row))
    rng = random.Random(seed)
    for _ in range(n_random):
        out.append(tuple(rng.getrandbits(p.width) for p in params))
    seen, uniq = set(), []
    for r in out:
        if r not in seen:
            seen.add(r)
            uniq.append(r)
    return uniq


@dataclass
class Found:
    rhs: Function
    cost: int
    found = True

    def __str__(self):
        return f"Found(cost {self.cost})"


@dataclass
class NotFound:
    bound: int
    warnings: list = field(default_factory=list)
    found = False

    def __str__(self):
        return f"NotFound(bound {self.bound})"


@dataclass
class SynthStats:
    candidates: int = 0
    verifications: int = 0
    counterexamples: int = 0
    solver_queries: int = 0
    seconds: float = 0.0


@dataclass(frozen=True)
class Leaf:
    kind: str  # in | lit | hole
    ref: int  # parameter index, literal value, or hole number
    width: int

    @property
    def const(self) -> bool:
        return self.kind != "in"


class _Search:
    def __init__(self, f: Function, cfg: SynthConfig, backend, stats: SynthStats):
        self.f = f
        self.cfg = cfg
        self.backend = backend
        self.stats = stats
        self.warnings: list[str] = []
        self.W = f.rets[0].width
        self.cex = seed_vectors(f.params, cfg.n_random, cfg.seed)
        self.widths = sorted({self.W} | {p.width for p in f.params})
        self.opcodes = cfg.opcodes()
        self._dummies: dict = {}
        self._solver = None
        self.deadline = None if cfg.time_limit is None else time.monotonic() + cfg.time_limit
        self._refresh()

    # -- counterexample set ------------------------------------------------

    def _refresh(self):
        cols = list(zip(*self.cex))
        self.inputs = [np.array(c, dtype=dtype_for(p.width)) for c, p in zip(cols, self.f.params)]
        (tv, tp), = eval_arrays(self.f, self.inputs)
        self.tv = np.broadcast_to(np.asarray(tv), (len(self.cex),))
        self.tp = np.broadcast_to(np.asarray(tp, dtype=bool), (len(self.cex),))

    def add_cex(self, row):
        row = tuple(row)
        if row in self.cex:
            raise RuntimeError("counterexample already in the set")
        self.cex.append(row)
        self.stats.counterexamples += 1
        self._refresh()

    # -- program space -----------------------------------------------------

    def leaves(self, h):
        out = [Leaf("in", i, p.width) for i, p in enumerate(self.f.params)]
        for w in self.widths:
            out += [Leaf("lit", v, w) for v in literal_pool(w)]
        out += [Leaf("hole", j, self.W) for j in range(h)]
        return out

    def _tuples(self, op, refs, rw, holes_seen):
        """Operand index tuples for ``op``; ``rw`` gives each ref's width, consts marks."""
        n = len(refs)
        def hole_ok(seq):
            seen = holes_seen
            for r in seq:
                x = refs[r]
                if isinstance(x, Leaf) and x.kind == "hole":
                    if x.ref > seen:
                        return False
                    seen = max(seen, x.ref + 1)
            return True

        def const(i):
            x = refs[i]
            return isinstance(x, Leaf) and x.const

        if op == "select":
            for c in range(n):
                if rw[c] != 1 or const(c):
                    continue
                for a in range(n):
                    for b in range(n):
                        if a != b and rw[a] == rw[b] and hole_ok((c, a, b)):
                            yield (c, a, b)
            return
        op_name, cond = op
        comm = op_name in COMMUTATIVE_OPS or (op_name == "icmp" and cond in ("eq", "ne"))
        for a in range(n):
            for b in range(a if comm else 0, n):
                if rw[a] != rw[b] or (const(a) and const(b)):
                    continue
                if a == b and op_name in _SELF_TRIVIAL:
                    continue
                if hole_ok((a, b)):
                    yield (a, b)

    def programs(self, c, h):
        """Yield (instrs, result_ref) with exactly ``c`` instructions using all ``h`` holes."""
        leaves = self.leaves(h)
        nl = len(leaves)
        if c == 0:
            for i, lf in enumerate(leaves):
                if lf.width != self.W:
                    continue
                if (h == 0 and lf.kind != "hole") or (h == 1 and lf.kind == "hole"):
                    yield [], i
            return
        arity = 3 if self.cfg.allow_select_icmp else 2
        refs: list = list(leaves)
        rw = [lf.width for lf in leaves]

        def rec(prog, used, holes_seen):
            pos = len(prog)
            last = pos == c - 1
            for op in self.opcodes:
                key = "select" if op[0] == "select" else op
                for t in self._tuples(key, refs, rw, holes_seen):
                    if op[0] == "icmp":
                        width = 1
                    elif op[0] == "select":
                        width = rw[t[1]]
                    else:
                        width = rw[t[0]]
                    hs = holes_seen
                    for r in t:
                        x = refs[r]
                        if isinstance(x, Leaf) and x.kind == "hole":
                            hs = max(hs, x.ref + 1)
                    nused = used | set(t)
                    temps = range(nl, nl + pos)
                    unused = sum(1 for k in temps if k not in nused) + 1 + (h - hs)
                    if last:
                        if width != self.W or unused != 1:
                            continue
                        yield prog + [(op, t, width)], nl + pos
                    else:
                        remaining = c - 1 - pos
                        if unused > remaining * (arity - 1) + 1:
                            continue
                        refs.append(("tmp", pos))
                        rw.append(width)
                        yield from rec(prog + [(op, t, width)], nused, hs)
                        refs.pop()
                        rw.pop()

        yield from rec([], frozenset(), 0)

    # -- evaluation --------------------------------------------------------

    def _dummy(self, op, width, t_widths):
        key = (op, width, t_widths)
        ins = self._dummies.get(key)
        if ins is None:
            opname, cond = op
            ops = tuple(Var(f"o{k}", w) for k, w in enumerate(t_widths))
            ins = Instruction("t", opname, width, ops, (), cond)
            self._dummies[key] = ins
        return ins

    def _evaluate(self, prog, res, leaves, holes, h, cols):
        """(values, poison) of the program, shape (len(holes[0]) or 1, len(cols))."""
        vals = []
        for lf in leaves:
            if lf.kind == "in":
                v = self.inputs[lf.ref][cols][None, :]
            elif lf.kind == "lit":
                v = np.array([[lf.ref]], dtype=dtype_for(lf.width))
            else:
                v = holes[lf.ref][:, None]
            vals.append((v, np.zeros((1, 1), dtype=bool)))
        widths = [lf.width for lf in leaves]
        for op, t, width in prog:
            ins = self._dummy(op, width, tuple(widths[r] for r in t))
            vals.append(eval_instruction(ins, [vals[r] for r in t]))
            widths.append(width)
        return vals[res]

    def consistent(self, prog, res, leaves, h, start=0):
        """Hole-assignment indices >= start agreeing with every counterexample."""
        n = len(self.cex)
        if h == 0:
            if start > 0:
                return np.zeros(0, dtype=np.int64)
            v, p = self._evaluate(prog, res, leaves, [], 0, np.arange(n))
            ok = self.tp | (~np.asarray(p, dtype=bool) & np.asarray(v == self.tv, dtype=bool))
            return np.zeros(1, dtype=np.int64) if bool(np.all(ok)) else np.zeros(0, dtype=np.int64)
        w = self.W
        surv = np.arange(start, 1 << (w * h), dtype=np.int64)
        done, step = 0, 1
        while done < n and len(surv):
            cols = np.arange(done, min(n, done + step))
            holes = [((surv >> (w * (h - 1 - j))) & mask(w)).astype(dtype_for(w)) for j in range(h)]
            v, p = self._evaluate(prog, res, leaves, holes, h, cols)
            v = np.broadcast_to(v, (len(surv), len(cols)))
            p = np.broadcast_to(np.asarray(p, dtype=bool), v.shape)
            ok = self.tp[cols] | (~p & np.asarray(v == self.tv[cols], dtype=bool))
            surv = surv[np.all(ok, axis=1)]
            done += len(cols)
            step *= 2
        return surv

    def hole_values(self, idx, h):
        w = self.W
        return [(idx >> (w * (h - 1 - j))) & mask(w) for j in range(h)]

    # -- candidates ----------------------------------------------------------

    def build(self, prog, res, leaves, hv) -> Function:
        nl = len(leaves)
        names = {p.name for p in self.f.params}
        ops: list = []
        for lf in leaves:
            if lf.kind == "in":
                ops.append(self.f.params[lf.ref])
            elif lf.kind == "lit":
                ops.append(Const(lf.ref, lf.width))
            else:
                ops.append(Const(hv[lf.ref], lf.width))
        body = []
        k = 0
        for op, t, width in prog:
            while f"s{k}" in names:
                k += 1
            name = f"s{k}"
            names.add(name)
            args = [ops[r] for r in t]
            if len(args) == 2 and isinstance(args[0], Const) and not isinstance(args[1], Const) \
                    and (op[0] in COMMUTATIVE_OPS or op[1] in ("eq", "ne")):
                args.reverse()  # constant last, as written by hand
            ins = Instruction(name, op[0], width, tuple(args), (), op[1])
            body.append(ins)
            ops.append(ins.result)
        ret = ops[res] if res < nl or not body else body[-1].result
        return Function(self.f.name + ".rhs", self.f.params, tuple(body), (ret,))

    def verify(self, rhs: Function):
        self.stats.verifications += 1
        q = Query(self.f, rhs, len(self.f.params), label=self.f.name)
        return self.backend.check(q)

    def _timed_out(self):
        return self.deadline is not None and time.monotonic() > self.deadline

    def solver(self):
        if self._solver is None:
            path = find_solver()
            if path is None:
                raise SolverError("no solver for wide constant holes")
            self._solver = SolverBackend(path)
        return self._solver

    def search(self, c, h):
        leaves = self.leaves(h)
        wide_holes = h > 0 and self.W > self.cfg.hole_enum_max_width
        if wide_holes:
            try:
                self.solver()
            except SolverError as e:
                self.warnings.append(f"cost {c}, {h} hole(s): skipped ({e})")
                return None
        for prog, res in self.programs(c, h):
            if self._timed_out():
                self.warnings.append("time limit reached")
                raise TimeoutError
            self.stats.candidates += 1
            if wide_holes:
                found = self._search_wide(prog, res, leaves, h)
                if found is not None:
                    return found
                continue
            start = 0
            while True:
                surv = self.consistent(prog, res, leaves, h, start)
                if not len(surv):
                    break
                idx = int(surv[0])
                rhs = self.build(prog, res, leaves, self.hole_values(idx, h) if h else [])
                v = self.verify(rhs)
                if v.is_valid:
                    return rhs
                if v.is_unknown:
                    self.warnings.append(f"candidate skipped: {v}")
                    start = idx + 1
                    continue
                self.add_cex(v.arguments())
                start = idx if h else 0
                if h == 0:
                    break
        return None

    def _search_wide(self, prog, res, leaves, h):
        # holes stay symbolic: build a skeleton with the holes as extra parameters
        while True:
            if self.stats.solver_queries >= self.cfg.max_solver_queries:
                if "solver query cap reached" not in self.warnings:
                    self.warnings.append("solver query cap reached")
                return None
            hole_params = [Var(f"h{j}", self.W) for j in range(h)]
            skel_leaves = [lf if lf.kind != "hole" else Leaf("in", len(self.f.params) + lf.ref, lf.width)
                           for lf in leaves]
            skel_f = Function(self.f.name + ".skel", tuple(self.f.params) + tuple(hole_params),
                              self.f.body, self.f.rets)
            saved = self.f
            self.f = skel_f
            try:
                skel = self.build(prog, res, skel_leaves, [])
            finally:
                self.f = saved
            examples = []
            for row, tv, tp in zip(self.cex, self.tv, self.tp):
                examples.append((list(row) + [0] * h, None if tp else int(tv)))
            self.stats.solver_queries += 1
            hv = self.solver().solve_holes(skel, len(self.f.params), [(r, [t]) for r, t in examples])
            if hv is None:
                return None
            rhs = self.build(prog, res, leaves, hv)
            v = self.verify(rhs)
            if v.is_valid:
                return rhs
            if v.is_unknown:
                self.warnings.append(f"candidate skipped: {v}")
                return None
            self.add_cex(v.arguments())


def synthesize(s, cfg: SynthConfig | None = None, backend=None, stats: SynthStats | None = None):
    """Cheapest verified replacement for slice ``s`` costing less than it, or NotFound."""
    from ..verify import default_backend
    from .slice import Slice

    cfg = cfg or SynthConfig()
    backend = backend or default_backend()
    stats = stats if stats is not None else SynthStats()
    f = s.function if isinstance(s, Slice) else s
    bound = min(cfg.max_cost, len(f.body) - 1)
    if bound < 0:
        return NotFound(bound, ["slice has no instructions"])
    t0 = time.monotonic()
    search = _Search(f, cfg, backend, stats)
    try:
        for c in range(bound + 1):
            for h in range(0, min(cfg.max_holes, max(1, c)) + 1):
                rhs = search.search(c, h)
                if rhs is not None:
                    return Found(rhs, c)
    except TimeoutError:
        pass
    finally:
        stats.seconds += time.monotonic() - t0
    return NotFound(bound, search.warnings)


__all__ = [
    "Found", "Leaf", "NotFound", "SynthConfig", "SynthStats", "literal_pool", "seed_vectors",
    "synthesize", "POISON",
]
