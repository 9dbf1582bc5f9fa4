"""Generalize concrete rewrites: symbolic constants, width polymorphism, learned preconditions.

The ground truth for a precondition is the set of constant tuples for
which the rule is a valid refinement at a given width.  That set includes
tuples that make the LHS poison on every input (refinement then holds
vacuously), which is why learned preconditions contain clauses like
``C1 uge width(%x)``.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from .ir import CAST_OPS, mask, to_signed
from .rules import PInstr, PLit, PSym, PVar, Rule, RuleError, format_pred
from .rules import pred as P
from .verify import BudgetExceeded, rule_queries, valid_constant_mask, verify_rule

log = logging.getLogger(__name__)


class PreconditionViolation(RuleError):
    pass


# -- abstraction -----------------------------------------------------------------


def abstract_constants_report(concrete: Rule) -> tuple[Rule, list[str]]:
    """Symbolic constants for LHS literals, width annotations dropped.

    Every LHS literal occurrence gets its own symbol, except that a value
    also written on the RHS is shared: all its LHS occurrences and its RHS
    occurrences become one symbol.  Other RHS literals stay literal.
    """
    notes: list[str] = []
    rhs_values = {o.value for ins in concrete.rhs for o in ins.operands if isinstance(o, PLit)}
    if isinstance(concrete.replacement, PLit):
        rhs_values.add(concrete.replacement.value)
    taken = set(concrete.symbols) | {i.name for i in concrete.lhs} | set(concrete.inputs)
    counter = itertools.count(1)
    shared: dict[int, PSym] = {}

    def fresh():
        while True:
            n = f"C{next(counter)}"
            if n not in taken:
                taken.add(n)
                return PSym(n)

    def strip(ins: PInstr, ops) -> PInstr:
        width = ins.width if ins.op in CAST_OPS else None
        if ins.op in CAST_OPS and ins.width is not None:
            notes.append(f"%{ins.name}: cast keeps its explicit width i{ins.width}")
        return PInstr(ins.name, ins.op, tuple(ops), ins.flags, ins.cond, width)

    lhs = []
    n_lits = 0
    for ins in concrete.lhs:
        ops = []
        for o in ins.operands:
            if isinstance(o, PLit):
                n_lits += 1
                if o.value in rhs_values:
                    if o.value not in shared:
                        shared[o.value] = fresh()
                    ops.append(shared[o.value])
                else:
                    ops.append(fresh())
            else:
                ops.append(o)
        lhs.append(strip(ins, ops))
    if n_lits == 0:
        notes.append("no literal constants on the LHS; rule left unchanged")
        log.warning("%s: no literal constants on the LHS", concrete.name)
        return concrete, notes

    def rhs_op(o):
        if isinstance(o, PLit):
            if o.value in shared:
                return shared[o.value]
            notes.append(f"RHS literal {o.value} has no LHS counterpart; kept as a literal")
            return PLit(o.value)
        return o

    rhs = [strip(ins, [rhs_op(o) for o in ins.operands]) for ins in concrete.rhs]
    rep = concrete.replacement
    if rep is not None:
        rep = rhs_op(rep)
    name = concrete.name + "-general"
    return Rule(name, tuple(lhs), tuple(rhs), None, rep), notes


def abstract_constants(concrete: Rule) -> Rule:
    return abstract_constants_report(concrete)[0]


# -- oracle ------------------------------------------------------------------------


def _query(general: Rule, width: int):
    qs = rule_queries(general, [width], pre=None)
    if not qs:
        raise RuleError(f"{general.name}: not admissible at width {width}")
    return qs[0]


def valid_table(general: Rule, width: int, max_bits: int = 24):
    """(tuples array, valid mask, query) over all constant tuples at ``width``."""
    q = _query(general, width)
    cbits = sum(p.width for p in q.consts)
    if cbits > 20:
        raise BudgetExceeded(f"{cbits} bits of symbolic constants exceed 20")
    tuples, ok = valid_constant_mask(q, max_bits)
    return tuples, ok, q


def enumerate_valid_set(general: Rule, width: int) -> set[tuple[int, ...]]:
    """Constant tuples (in symbol order, unsigned) for which the rule is valid at ``width``."""
    tuples, ok, _ = valid_table(general, width)
    return {tuple(int(v) for v in row) for row in tuples[ok]}


# -- precondition learning -------------------------------------------------------


def _width_var(r: Rule, sym: str) -> str:
    t = r.typing
    c = t.cls(("s", sym))
    for v in list(r.inputs) + [i.name for i in r.lhs]:
        if t.cls(("v", v)) == c:
            return v
    return r.inputs[0] if r.inputs else r.lhs[0].name


def candidate_atoms(r: Rule) -> list:
    """The atom grammar, smallest/simplest first."""
    syms = r.symbols
    atoms = []
    W = {s: P.WidthOf(_width_var(r, s)) for s in syms}
    for s in syms:
        C = P.Sym(s)
        for lit in (0, 1, 2, -1):
            atoms.append(P.Binary("==", C, P.Lit(lit)))
        atoms.append(P.Binary("==", C, P.Binary("-", W[s], P.Lit(1))))
        atoms.append(P.Binary("uge", C, W[s]))
        atoms.append(P.Binary("ult", C, W[s]))
        atoms.append(P.Call("isPowerOf2", (C,)))
        for lit in (1, 2):
            atoms.append(P.Binary("ult", C, P.Lit(lit)))
            atoms.append(P.Binary("uge", C, P.Lit(lit)))
        atoms.append(P.Binary("slt", C, P.Lit(0)))
        atoms.append(P.Binary("sge", C, P.Lit(0)))
    for a, b in itertools.combinations(syms, 2):
        Ca, Cb = P.Sym(a), P.Sym(b)
        atoms.append(P.Binary("==", Ca, Cb))
        atoms.append(P.Binary("==", P.Binary("+", Ca, Cb), W[a]))
        atoms.append(P.Binary("==", P.Binary("&", Ca, Cb), P.Lit(0)))
    return atoms


def _truth(e, tuples, q) -> np.ndarray:
    consts = {p.name: (tuples[:, k].astype(np.int64), p.width) for k, p in enumerate(q.consts)}
    out = P.eval_pred_arrays(e, consts, q.var_widths)
    return np.broadcast_to(out, (len(tuples),)).copy()


def _bits(mask_arr: np.ndarray) -> int:
    return int.from_bytes(np.packbits(mask_arr, bitorder="little").tobytes(), "little")


@dataclass
class PreconditionReport:
    precondition: str
    train_width: int
    test_widths: list
    exact_at_train: bool
    sound_at_all_tested: bool
    weakest_at_all_tested: bool
    verified: bool = False
    per_width: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {
            "precondition": self.precondition,
            "train_width": self.train_width,
            "test_widths": list(self.test_widths),
            "exact_at_train": self.exact_at_train,
            "sound_at_all_tested": self.sound_at_all_tested,
            "weakest_at_all_tested": self.weakest_at_all_tested,
            "verified": self.verified,
            "per_width": {str(k): v for k, v in self.per_width.items()},
            "notes": list(self.notes),
        }


def _search_dnf(conjs, target: int, max_disjuncts: int = 3):
    """Smallest (by atom count) union of <= max_disjuncts conjunctions equal to target."""
    by_size: dict[int, list] = {}
    for c in conjs:
        by_size.setdefault(len(c[0]), []).append(c)
    sizes = sorted(by_size)
    max_total = max_disjuncts * max(sizes) if sizes else 0
    for total in range(1, max_total + 1):
        for d in range(1, max_disjuncts + 1):
            for parts in _partitions(total, d, sizes):
                found = _cover(parts, by_size, target)
                if found is not None:
                    return found
    return None


def _partitions(total, d, sizes):
    """Non-decreasing tuples of d sizes summing to total."""
    def rec(rem, k, lo):
        if k == 0:
            if rem == 0:
                yield ()
            return
        for s in sizes:
            if s >= lo and s <= rem:
                for rest in rec(rem - s, k - 1, s):
                    yield (s,) + rest
    yield from rec(total, d, 0)


def _cover(parts, by_size, target):
    def rec(i, acc, start, chosen):
        if i == len(parts):
            return list(chosen) if acc == target else None
        pool = by_size[parts[i]]
        j0 = start if i > 0 and parts[i] == parts[i - 1] else 0
        for j in range(j0, len(pool)):
            atoms, bits = pool[j]
            new = acc | bits
            if new == acc and i > 0:
                continue
            if i == len(parts) - 1 and new != target:
                continue
            r = rec(i + 1, new, j + 1, chosen + [pool[j]])
            if r is not None:
                return r
        return None
    return rec(0, 0, 0, [])


def learn_precondition(r: Rule, tuples: np.ndarray, valid: np.ndarray, q, max_conj: int = 3,
                       max_disjuncts: int = 3):
    """(formula, exact) fitting the valid set over ``tuples``."""
    if valid.all():
        return P.TRUE, True
    if not valid.any():
        return P.BoolLit(False), True
    target = _bits(valid)
    atoms = candidate_atoms(r)
    cols = [(a, _bits(_truth(a, tuples, q))) for a in atoms]
    cols = [(a, b) for a, b in cols if b]  # drop never-true atoms
    # sound conjunctions (subsets of the valid set), deduplicated by their set
    conjs, seen = [], set()
    for k in range(1, max_conj + 1):
        for combo in itertools.combinations(range(len(cols)), k):
            bits = target
            for i in combo:
                bits &= cols[i][1]
            if not bits:
                continue
            conj = bits
            for i in combo:
                conj &= cols[i][1]
            # conj is sound by construction only if the atoms' intersection lies in the target
            inter = ~0
            for i in combo:
                inter &= cols[i][1]
            if inter & ~target:
                continue
            if inter in seen:
                continue
            seen.add(inter)
            conjs.append((tuple(cols[i][0] for i in combo), inter))
    found = _search_dnf(conjs, target, max_disjuncts)
    if found is not None:
        return _formula(found), True
    # fall back: greedy cover by the largest sound conjunctions
    chosen, acc = [], 0
    for _ in range(max_disjuncts):
        best = max(conjs, key=lambda c: (bin(c[1] & ~acc).count("1"), -len(c[0])), default=None)
        if best is None or not best[1] & ~acc:
            break
        chosen.append(best)
        acc |= best[1]
    if not chosen:
        return P.BoolLit(False), False
    return _formula(chosen), False


def _formula(conjs):
    return P.disj(*[P.conj(*atoms) for atoms, _ in conjs])


def _with_pre(r: Rule, pre) -> Rule:
    return Rule(r.name, r.lhs, r.rhs, None if pre == P.TRUE else pre, r.replacement)


def infer_precondition(general: Rule, train_width: int = 4, test_widths=(5, 6), backend=None,
                       verify: bool = True):
    """Learn a precondition at ``train_width``; cross-check at ``test_widths``.

    Returns ``(pre, report)``; ``pre`` is ``TRUE`` when the rule is valid
    for every constant tuple.
    """
    tuples, ok, q = valid_table(general, train_width)
    pre, exact = learn_precondition(general, tuples, ok, q)
    per_width = {train_width: {"valid": int(ok.sum()), "accepted": None, "tuples": len(ok)}}
    acc = _truth(pre, tuples, q) if pre != P.TRUE else np.ones(len(ok), bool)
    per_width[train_width]["accepted"] = int(acc.sum())
    sound_all = bool(not (acc & ~ok).any())
    weakest_all = bool((acc == ok).all())
    for w in test_widths:
        t2, ok2, q2 = valid_table(general, w)
        acc2 = _truth(pre, t2, q2) if pre != P.TRUE else np.ones(len(ok2), bool)
        per_width[w] = {"valid": int(ok2.sum()), "accepted": int(acc2.sum()), "tuples": len(ok2)}
        sound_all &= bool(not (acc2 & ~ok2).any())
        weakest_all &= bool((acc2 == ok2).all())
    rep = PreconditionReport(format_pred(pre), train_width, list(test_widths), exact, sound_all,
                             weakest_all, per_width=per_width)
    if not exact:
        rep.notes.append("no formula in the grammar matches the valid set exactly; not weakest")
    if verify:
        v = verify_rule(_with_pre(general, pre), sorted({train_width, *test_widths}), backend)
        rep.verified = v.is_valid
        if not v.is_valid:
            rep.notes.append(f"re-verification failed: {v}")
    return pre, rep


def generalize_rule(concrete: Rule, train_width: int = 4, test_widths=(5, 6), backend=None):
    """abstract_constants + infer_precondition; returns (rule, report, notes)."""
    g, notes = abstract_constants_report(concrete)
    if not g.symbols:
        return g, None, notes
    pre, rep = infer_precondition(g, train_width, test_widths, backend)
    rep.notes = notes + rep.notes
    return _with_pre(g, pre), rep, notes


# -- specialization ----------------------------------------------------------------


def specialize(general: Rule, binding: dict, width: int) -> Rule:
    """Monomorphic instance of ``general`` with its symbols fixed by ``binding``."""
    qs = rule_queries(general, [width], pre=None)
    if not qs:
        raise RuleError(f"{general.name}: not admissible at width {width}")
    t = general.typing
    a = next(iter(t.assignments([width])))
    missing = [s for s in general.symbols if s not in binding]
    if missing:
        raise RuleError(f"binding misses {missing}")
    vals = {s: (int(binding[s]) & mask(t.width(("s", s), a)), t.width(("s", s), a)) for s in general.symbols}
    if general.pre is not None:
        if not P.eval_precondition(general.pre, vals, qs[0].var_widths):
            raise PreconditionViolation(
                f"{general.name}: binding {dict(binding)} violates {format_pred(general.pre)} at i{width}"
            )

    def op(o):
        if isinstance(o, PSym):
            v, w = vals[o.name]
            return PLit(to_signed(v, w))
        if isinstance(o, PLit):
            return PLit(o.value)
        return o

    def inst(ins: PInstr) -> PInstr:
        if ins.op == "icmp":
            o = ins.operands[0]
            key = ("v", o.name) if isinstance(o, PVar) else ("s", o.name) if isinstance(o, PSym) else None
            w = t.width(key, a) if key else width
        else:
            w = t.width(("v", ins.name), a)
        return PInstr(ins.name, ins.op, tuple(op(o) for o in ins.operands), ins.flags, ins.cond, w)

    rep = general.replacement
    if rep is not None:
        rep = op(rep)
    name = general.name.removesuffix("-general")
    if not name.endswith(f"-i{width}"):
        name += f"-i{width}"
    return Rule(name, tuple(inst(i) for i in general.lhs), tuple(inst(i) for i in general.rhs), None, rep)


def alpha_normal(r: Rule) -> str:
    """Rule text with values and symbols renamed by first appearance (for comparisons)."""
    names: dict[str, str] = {}

    def nm(n, prefix):
        if n not in names:
            names[n] = f"{prefix}{sum(1 for v in names.values() if v.startswith(prefix))}"
        return names[n]

    def op(o):
        if isinstance(o, PVar):
            return PVar(nm(o.name, "v"))
        if isinstance(o, PSym):
            return PSym(nm(o.name, "C"))
        return o

    def inst(i):
        ops = tuple(op(o) for o in i.operands)
        return PInstr(nm(i.name, "v"), i.op, ops, i.flags, i.cond, i.width)

    lhs = tuple(inst(i) for i in general_order(r.lhs))
    rhs = []
    for i in r.rhs:
        ops = tuple(op(o) for o in i.operands)
        rhs.append(PInstr(nm(i.name, "v"), i.op, ops, i.flags, i.cond, i.width))
    rep = op(r.replacement) if r.replacement is not None else None
    body = [str(i) for i in lhs] + ["=>"] + [str(i) for i in rhs]
    if rep is not None:
        body.append(f"{names[r.root]} = {rep}")
    return "\n".join(body)


def general_order(instrs):
    return list(instrs)


__all__ = [
    "PreconditionReport", "PreconditionViolation", "abstract_constants",
    "abstract_constants_report", "alpha_normal", "candidate_atoms", "enumerate_valid_set",
    "generalize_rule", "infer_precondition", "learn_precondition", "specialize", "valid_table",
]
