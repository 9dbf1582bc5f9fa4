"""Backward data-flow slices and their canonical (alpha-invariant) form."""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass

from ..ir import Const, Function, Instruction, Var, print_function

MAX_SWAP_BITS = 10


@dataclass(frozen=True)
class Slice:
    root: str
    function: Function  # params = frontier inputs, returns the root
    depth: int

    @property
    def inputs(self):
        return self.function.params

    @property
    def body(self):
        return self.function.body

    @property
    def cost(self) -> int:
        return len(self.function.body)

    @property
    def width(self) -> int:
        return self.function.rets[0].width


class RootError(KeyError):
    pass


def harvest(f: Function, root: str, max_depth: int = 5) -> Slice:
    """Instructions within ``max_depth`` operand hops of ``root`` (root = hop 1).

    Values beyond the cut, and parameters, become the slice's inputs, listed
    in their order of definition in ``f``.
    """
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    if root not in f.index:
        raise RootError(f"%{root} is not an instruction result of @{f.name}")
    dist = {root: 1}
    todo = deque([root])
    while todo:
        n = todo.popleft()
        if dist[n] >= max_depth:
            continue
        for o in f.definition(n).operands:
            if isinstance(o, Var) and o.name in f.index and o.name not in dist:
                dist[o.name] = dist[n] + 1
                todo.append(o.name)
    body = [ins for ins in f.body if ins.name in dist]
    inputs: set[str] = set()
    for ins in body:
        for o in ins.operands:
            if isinstance(o, Var) and o.name not in dist:
                inputs.add(o.name)
    order = [p.name for p in f.params] + [i.name for i in f.body]
    params = tuple(Var(n, f.widths[n]) for n in order if n in inputs)
    sf = Function(f"{f.name}.{root}", params, tuple(body), (Var(root, f.widths[root]),))
    return Slice(root, sf, max(dist.values()))


def _shape(f: Function):
    """Name-free structural text of each value, for ordering commutative operands."""
    memo: dict[str, str] = {p.name: f"in{p.width}" for p in f.params}

    def text(o):
        if isinstance(o, Const):
            return f"c{o.width}:{o.value}"
        return memo[o.name]

    for ins in f.body:
        ks = [text(o) for o in ins.operands]
        if ins.commutative:
            ks.sort()
        memo[ins.name] = f"({ins.opcode} {' '.join(ins.flags)} i{ins.width} {' '.join(ks)})"
    return memo


def _render(f: Function, swaps: dict[str, bool]):
    """Rename by first visit from the root, applying the chosen operand swaps."""
    names: dict[str, str] = {}
    params: list[Var] = []
    body: list[Instruction] = []
    nparam = itertools.count()
    ntmp = itertools.count()

    def ops_of(ins):
        return ins.operands[::-1] if swaps.get(ins.name) else ins.operands

    def visit(o):
        if isinstance(o, Const) or o.name in names:
            return
        ins = f.definition(o.name)
        if ins is None:
            names[o.name] = f"x{next(nparam)}"
            params.append(Var(names[o.name], o.width))
            return
        for a in ops_of(ins):
            visit(a)
        names[o.name] = f"t{next(ntmp)}"
        new_ops = tuple(a if isinstance(a, Const) else Var(names[a.name], a.width) for a in ops_of(ins))
        body.append(Instruction(names[o.name], ins.op, ins.width, new_ops, ins.flags, ins.cond))

    for r in f.rets:
        visit(r)
    rets = tuple(r if isinstance(r, Const) else Var(names[r.name], r.width) for r in f.rets)
    g = Function("slice", tuple(params), tuple(body), rets)
    return g, names


def canonicalize(s) -> tuple[Function, dict[str, str]]:
    """Canonical function of a slice, plus canonical input name -> original name.

    Up to ``MAX_SWAP_BITS`` commutative instructions are resolved by trying
    every operand order and keeping the smallest text; beyond that,
    operands are ordered by their name-free structure.
    """
    f = s.function if isinstance(s, Slice) else s
    comm = [ins.name for ins in f.body if ins.commutative]
    if len(comm) <= MAX_SWAP_BITS:
        best = None
        for bits in itertools.product((False, True), repeat=len(comm)):
            g, names = _render(f, dict(zip(comm, bits)))
            t = print_function(g, oneline=True)
            if best is None or t < best[0]:
                best = (t, g, names)
        _, g, names = best
    else:
        shape = _shape(f)

        def key(o):
            return f"c{o.width}:{o.value}" if isinstance(o, Const) else shape[o.name]

        swaps = {}
        for ins in f.body:
            if ins.commutative:
                a, b = ins.operands
                swaps[ins.name] = key(b) < key(a)
        g, names = _render(f, swaps)
    inv = {v: k for k, v in names.items() if v.startswith("x")}
    return g, inv


def canonical_key(s) -> str:
    g, _ = canonicalize(s)
    return print_function(g, oneline=True)
