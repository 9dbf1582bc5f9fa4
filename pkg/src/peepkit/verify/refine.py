"""Refinement checks for rules and function pairs, plus flag inference."""

from __future__ import annotations

import itertools
import logging

from ..ir import FLAG_OPS, FLAG_ORDER, Function, parse_function, rescale
from ..rules import Rule, RuleError, parse_rule, rule_functions, validate_width_set
from ..rules.rule import PInstr
from .exhaustive import ExhaustiveBackend
from .smt import SolverBackend, SolverError, find_solver
from .verdict import Query, Unknown, Valid

log = logging.getLogger(__name__)

DEFAULT_WIDTHS = (4, 8)


class SignatureMismatch(ValueError):
    pass


def default_backend(max_bits: int = 24, timeout: float = 10.0):
    """Exhaustive enumeration, falling back to an SMT solver when one is installed."""
    fallback = None
    if find_solver():
        try:
            fallback = SolverBackend(timeout=timeout)
        except SolverError:
            fallback = None
    return ExhaustiveBackend(max_bits, fallback)


def backend_from_spec(spec: str | None, timeout: float = 10.0):
    """``exhaustive`` | ``solver`` | ``solver:<path>``."""
    if spec is None or spec == "exhaustive":
        return default_backend(timeout=timeout)
    if spec == "exhaustive-only":
        return ExhaustiveBackend()
    if spec == "solver":
        return SolverBackend(timeout=timeout)
    if spec.startswith("solver:"):
        return SolverBackend(spec[len("solver:"):], timeout)
    raise ValueError(f"unknown backend {spec!r}")


def _label(r: Rule, assignment) -> str:
    ws = sorted({w for w in assignment.values()} - {1}) or [1]
    return f"{r.name}@" + ",".join(f"i{w}" for w in ws)


def rule_queries(r: Rule, widths=DEFAULT_WIDTHS, pre="rule"):
    """One Query per admissible width assignment; ``pre=None`` drops the precondition."""
    ws = validate_width_set(widths)
    t = r.typing
    out = []
    for a in t.assignments(ws):
        lhs, rhs = rule_functions(r, a)
        vw = {v: t.width(("v", v), a) for v in list(r.inputs) + [i.name for i in r.lhs]}
        out.append(Query(lhs, rhs, len(r.inputs), r.pre if pre == "rule" else pre, vw, _label(r, a)))
    return out


def _run(queries, backend):
    backend = backend or default_backend()
    checked, used, unknown = [], [], None
    for q in queries:
        v = backend.check(q)
        if v.is_counterexample:
            return v
        if v.is_unknown:
            unknown = unknown or v
            continue
        checked += v.checked
        used += [b for b in v.backends if b not in used]
    if unknown is not None:
        return unknown
    return Valid(checked, used)


def verify_rule(r: Rule, widths=DEFAULT_WIDTHS, backend=None):
    """Valid iff the RHS refines the LHS under ``pre`` at every admissible width."""
    qs = rule_queries(r, widths)
    if not qs:
        return Unknown(f"{r.name}: no admissible width assignment in {sorted(set(widths))}", r.name)
    return _run(qs, backend)


def check_refinement(lhs, rhs, pre=None, widths=DEFAULT_WIDTHS, backend=None):
    """Refinement of ``rhs`` over ``lhs``.

    Either two Functions with the same parameters (checked positionally),
    or two instruction texts in rule syntax (``rhs`` may be a bare alias
    such as ``%r = %y``) sharing free variables and symbols.
    """
    if isinstance(lhs, Function) or isinstance(rhs, Function):
        if pre is not None:
            raise ValueError("preconditions need the rule form (symbolic constants)")
        return validate_translation(lhs, rhs, widths, backend)
    r = parse_rule(f"{lhs}\n=>\n{rhs}", "refinement", pre if isinstance(pre, str) else None)
    if pre is not None and not isinstance(pre, str):
        r = Rule(r.name, r.lhs, r.rhs, pre, r.replacement)
    return verify_rule(r, widths, backend)


def _signature(f: Function):
    return [p.width for p in f.params], [o.width for o in f.rets]


def _single_width(f: Function):
    ws = {p.width for p in f.params} | set(f.widths.values()) | {o.width for o in f.rets}
    ws.discard(1)
    return len(ws) <= 1


def validate_translation(before: Function, after: Function, widths=None, backend=None):
    """Componentwise refinement of ``after``'s results over ``before``'s.

    With ``widths``, single-width functions are re-instantiated at each
    width; functions mixing widths are checked at their own widths only.
    """
    if isinstance(before, str):
        before = parse_function(before)
    if isinstance(after, str):
        after = parse_function(after)
    if _signature(before) != _signature(after):
        raise SignatureMismatch(
            f"signature mismatch: {_signature(before)} vs {_signature(after)}"
        )
    pairs = [(before, after)]
    if widths is not None:
        ws = validate_width_set(widths)
        if _single_width(before) and _single_width(after):
            pairs = [(rescale(before, w), rescale(after, w)) for w in ws]
    qs = []
    for b, a in pairs:
        w = max([p.width for p in b.params] + [o.width for o in b.rets])
        qs.append(Query(b, a, len(b.params), label=f"{b.name}@i{w}"))
    return _run(qs, backend)


def _flag_slots(r: Rule):
    slots = []
    for i, ins in enumerate(r.rhs):
        if ins.op in FLAG_OPS:
            slots += [(i, f) for f in FLAG_ORDER if f not in ins.flags]
    return slots


def _add_flags(r: Rule, chosen) -> Rule:
    rhs = list(r.rhs)
    for i, f in chosen:
        ins = rhs[i]
        flags = tuple(x for x in FLAG_ORDER if x in ins.flags or x == f)
        rhs[i] = PInstr(ins.name, ins.op, ins.operands, flags, ins.cond, ins.width)
    return Rule(r.name, r.lhs, tuple(rhs), r.pre, r.replacement)


def infer_flags(r: Rule, widths=DEFAULT_WIDTHS, backend=None) -> Rule:
    """Add as many nsw/nuw flags to the RHS as keep the rule valid.

    Subsets are tried in decreasing size, so the result has maximum
    cardinality and is therefore maximal.  Beyond 12 slots the search is
    greedy one slot at a time.
    """
    backend = backend or default_backend()
    base = verify_rule(r, widths, backend)
    if not base.is_valid:
        raise RuleError(f"{r.name}: rule is not valid to begin with ({base})")
    slots = _flag_slots(r)
    if not slots:
        return r
    if len(slots) > 12:
        chosen = []
        for s in slots:
            if verify_rule(_add_flags(r, chosen + [s]), widths, backend).is_valid:
                chosen.append(s)
        return _add_flags(r, chosen)
    for k in range(len(slots), 0, -1):
        for subset in itertools.combinations(slots, k):
            cand = _add_flags(r, subset)
            if verify_rule(cand, widths, backend).is_valid:
                return cand
    return r


def encode_rule_query(r: Rule, width: int) -> str:
    """SMT-LIB text for ``r`` at one width (first admissible assignment)."""
    from .smt import encode_query

    qs = rule_queries(r, [width])
    if not qs:
        raise RuleError(f"{r.name}: not admissible at width {width}")
    return encode_query(qs[0])


__all__ = [
    "DEFAULT_WIDTHS", "SignatureMismatch", "backend_from_spec", "check_refinement",
    "default_backend", "encode_rule_query", "infer_flags", "rule_queries",
    "validate_translation", "verify_rule",
]
