"""Rule compilation into a bottom-up matching automaton, and greedy rewriting.

Every LHS subpattern is hash-consed into a *shape* (variable names erased,
so all pattern variables share one shape).  A subject value's *state* is
the set of shapes it matches.  The state of an instruction depends only on
its opcode, condition, flags, width and the states of its operands, so
transitions are memoized on exactly that key and built lazily on first
use.  Labeling a node therefore costs one table lookup no matter how many
rules are compiled.

Commutative operators are handled by sorting the operand states in the
key and accepting a shape under either operand order.  Nonlinear
variables, width consistency and preconditions are checked afterwards on
the concrete binding.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

from .ir import Const, Function, Instruction, Var, dce, mask, print_function
from .ir.core import substitute
from .rules import PInstr, PLit, PSym, PVar, Rule, RuleError
from .rules.rule import binding_assignment, check_binding_pre, instantiate_rhs

ANY = 0  # shape id of a pattern variable
SYM = 1  # shape id of a symbolic constant


@dataclass(frozen=True)
class Candidate:
    rule: Rule
    index: int  # root instruction position
    root: str
    binding: tuple  # sorted (name, operand) pairs

    @property
    def env(self) -> dict:
        return dict(self.binding)

    def key(self):
        return (self.index, self.rule.name, self.binding)

    def __str__(self):
        return f"{self.rule.name} @%{self.root}"


class Matcher:
    def __init__(self, rules):
        self.rules = list(rules)
        names = [r.name for r in self.rules]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise RuleError(f"duplicate rule names: {', '.join(dupes)}")
        self._shape_ids: dict[tuple, int] = {("any",): ANY, ("sym",): SYM}
        self._shapes: list[tuple] = [("any",), ("sym",)]
        self._by_op: dict[tuple, list[int]] = {}
        self._lits: list[int] = []
        self.root_shape: list[int] = []
        self.def_shapes: list[dict[str, int]] = []
        for r in self.rules:
            defs: dict[str, int] = {}
            for ins in r.lhs:
                defs[ins.name] = self._intern_instr(ins, defs)
            self.def_shapes.append(defs)
            self.root_shape.append(defs[r.root])
        self._rules_by_shape: dict[int, list[int]] = {}
        for k, s in enumerate(self.root_shape):
            self._rules_by_shape.setdefault(s, []).append(k)
        # automaton state: interned frozensets of shape ids
        self._state_ids: dict[frozenset, int] = {}
        self.states: list[frozenset] = []
        self.state_rules: list[tuple[int, ...]] = []
        self.param_state = self._intern_state(frozenset({ANY}))
        self._delta: dict[tuple, int] = {}
        self._lock = threading.Lock()
        self.lookups = 0
        self.misses = 0
        self._label_cache: tuple | None = None

    # -- compilation ------------------------------------------------------

    def _intern(self, shape: tuple) -> int:
        k = self._shape_ids.get(shape)
        if k is None:
            k = len(self._shapes)
            self._shape_ids[shape] = k
            self._shapes.append(shape)
            if shape[0] == "ins":
                self._by_op.setdefault((shape[1], shape[2]), []).append(k)
            elif shape[0] == "lit":
                self._lits.append(k)
        return k

    def _intern_operand(self, o, defs) -> int:
        if isinstance(o, PVar):
            return defs.get(o.name, ANY)
        if isinstance(o, PSym):
            return SYM
        return self._intern(("lit", o.value, o.width))

    def _intern_instr(self, ins: PInstr, defs) -> int:
        kids = tuple(self._intern_operand(o, defs) for o in ins.operands)
        return self._intern(("ins", ins.op, ins.cond, frozenset(ins.flags), ins.width, kids))

    @property
    def n_shapes(self) -> int:
        return len(self._shapes)

    def _intern_state(self, s: frozenset) -> int:
        k = self._state_ids.get(s)
        if k is None:
            k = len(self.states)
            self._state_ids[s] = k
            self.states.append(s)
            hits = sorted({i for sh in s for i in self._rules_by_shape.get(sh, ())})
            self.state_rules.append(tuple(hits))
        return k

    # -- transitions ------------------------------------------------------

    def _const_state(self, c: Const) -> int:
        key = ("c", c.value, c.width)
        with self._lock:
            self.lookups += 1
            st = self._delta.get(key)
            if st is None:
                self.misses += 1
                s = {ANY, SYM}
                for k in self._lits:
                    _, v, w = self._shapes[k]
                    if (w is None or w == c.width) and (v & mask(c.width)) == c.value:
                        s.add(k)
                st = self._delta[key] = self._intern_state(frozenset(s))
        return st

    def _ins_state(self, ins: Instruction, kids: tuple[int, ...]) -> int:
        comm = ins.commutative
        kkey = tuple(sorted(kids)) if comm else kids
        key = (ins.op, ins.cond, ins.flags, ins.width, kkey)
        with self._lock:
            self.lookups += 1
            st = self._delta.get(key)
            if st is None:
                self.misses += 1
                st = self._delta[key] = self._intern_state(self._compute(ins, kkey, comm))
        return st

    def _compute(self, ins: Instruction, kids, comm) -> frozenset:
        sets = [self.states[k] for k in kids]
        pw = ins.operands[0].width if ins.op == "icmp" else ins.width
        out = {ANY}
        for k in self._by_op.get((ins.op, ins.cond), ()):
            _, _, _, flags, width, pk = self._shapes[k]
            if width is not None and width != pw:
                continue
            if not flags <= set(ins.flags) or len(pk) != len(sets):
                continue
            if all(p in s for p, s in zip(pk, sets)):
                out.add(k)
            elif comm and all(p in s for p, s in zip(pk, reversed(sets))):
                out.add(k)
        return frozenset(out)

    def label(self, f: Function) -> list[int]:
        """State id of every instruction of ``f`` (memoized for the last function)."""
        cached = self._label_cache
        if cached is not None and cached[0] is f:
            return cached[1]
        env: dict[str, int] = {p.name: self.param_state for p in f.params}
        out = []
        for ins in f.body:
            kids = tuple(
                self._const_state(o) if isinstance(o, Const) else env[o.name] for o in ins.operands
            )
            st = self._ins_state(ins, kids)
            env[ins.name] = st
            out.append(st)
        self._label_cache = (f, out)
        return out

    def reset_counters(self):
        self.lookups = 0
        self.misses = 0

    # -- binding extraction -----------------------------------------------

    def _bindings(self, k: int, f: Function, idx: int, labels):
        r = self.rules[k]
        defs = r.lhs_defs
        shapes = self.def_shapes[k]

        def operand(o, subj, env):
            if isinstance(o, PVar) and o.name in defs:
                if not isinstance(subj, Var) or subj.name not in f.index:
                    return
                yield from instr(defs[o.name], f.index[subj.name], env)
            elif isinstance(o, PVar):
                prev = env.get(o.name)
                if prev is None:
                    yield {**env, o.name: subj}
                elif prev == subj:
                    yield env
            elif isinstance(o, PSym):
                if isinstance(subj, Const):
                    prev = env.get(o.name)
                    if prev is None:
                        yield {**env, o.name: subj}
                    elif prev == subj:
                        yield env
            elif isinstance(subj, Const):
                if (o.width is None or o.width == subj.width) and (o.value & mask(subj.width)) == subj.value:
                    yield env

        def seq(ops, subs, env):
            if not ops:
                yield env
                return
            for e in operand(ops[0], subs[0], env):
                yield from seq(ops[1:], subs[1:], e)

        def instr(p: PInstr, j: int, env):
            if shapes[p.name] not in self.states[labels[j]]:
                return
            ins = f.body[j]
            res = ins.result
            prev = env.get(p.name)
            if prev is not None and prev != res:
                return
            env = {**env, p.name: res}
            yield from seq(p.operands, ins.operands, env)
            if ins.commutative:
                yield from seq(p.operands, ins.operands[::-1], env)

        yield from instr(r.lhs[-1], idx, {})

    def match_at(self, f: Function, idx: int) -> list[Candidate]:
        """Candidates rooted at ``f.body[idx]``, in rule order.

        Each rule contributes at most one candidate: its first binding (in
        operand order, original before swapped) that passes the width and
        precondition filters.
        """
        labels = self.label(f)
        out = []
        root = f.body[idx].name
        for k in self.state_rules[labels[idx]]:
            r = self.rules[k]
            for env in self._bindings(k, f, idx, labels):
                if binding_ok(r, env):
                    out.append(Candidate(r, idx, root, tuple(sorted(env.items(), key=lambda t: t[0]))))
                    break
        return out


def binding_ok(r: Rule, env: dict) -> bool:
    try:
        binding_assignment(r, env)
    except RuleError:
        return False
    try:
        return check_binding_pre(r, env)
    except Exception:
        return False


def compile_rules(rules) -> Matcher:
    return Matcher(rules)


def match_at(m: Matcher, f: Function, index: int) -> list[Candidate]:
    return m.match_at(f, index)


def apply_candidate(f: Function, c: Candidate) -> Function:
    """Splice the instantiated RHS in place of the root (no DCE)."""
    taken = set(f.widths)
    new, rep = instantiate_rhs(c.rule, c.env, taken)
    body = list(f.body)
    root = body[c.index]
    if c.rule.replacement is None:
        body[c.index:c.index + 1] = new
        return f.replace(body=tuple(body))
    body[c.index:c.index + 1] = new
    sub = {root.name: rep}
    body = [substitute(i, sub) for i in body]
    rets = tuple(rep if isinstance(o, Var) and o.name == root.name else o for o in f.rets)
    return f.replace(body=tuple(body), rets=rets)


def _operand_holds(o, s, env) -> bool:
    if isinstance(o, PLit):
        return isinstance(s, Const) and (o.width is None or o.width == s.width) \
            and (o.value & mask(s.width)) == s.value
    return env.get(o.name) == s


def candidate_holds(f: Function, c: Candidate) -> bool:
    """Whether ``c``'s binding still describes instructions of ``f``.

    A direct structural check (no automaton): every LHS instruction must
    still be defined with the bound operands, and the filters must pass.
    """
    env = c.env
    for p in c.rule.lhs:
        v = env.get(p.name)
        if not isinstance(v, Var) or v.name not in f.index:
            return False
        ins = f.definition(v.name)
        pw = ins.operands[0].width if ins.op == "icmp" else ins.width
        if (ins.op, ins.cond) != (p.op, p.cond) or not set(p.flags) <= set(ins.flags):
            return False
        if p.width is not None and p.width != pw:
            return False
        orders = [ins.operands, ins.operands[::-1]] if ins.commutative else [ins.operands]
        if not any(all(_operand_holds(o, s, env) for o, s in zip(p.operands, ops)) for ops in orders):
            return False
    return binding_ok(c.rule, env)


@dataclass
class RewriteResult:
    function: Function
    trace: list = field(default_factory=list)
    steps: int = 0
    status: str = "fixpoint"  # fixpoint | budget | cycle


def _first_diff(a, b) -> int:
    for k, (x, y) in enumerate(zip(a, b)):
        if x != y:
            return k
    return min(len(a), len(b))


def fingerprint(f: Function) -> str:
    return print_function(f, oneline=True)


def rewrite_greedy(m: Matcher, f: Function, budget: int | None = None):
    """Fire the first candidate (lowest index, then rule order) until none is left.

    Stops when the budget (default 4 x body size) runs out or a function
    seen before recurs; both are recorded in the trace.  Returns
    ``(function, trace)``.
    """
    res = rewrite_greedy_ex(m, f, budget)
    return res.function, res.trace


def rewrite_greedy_ex(m: Matcher, f: Function, budget: int | None = None) -> RewriteResult:
    if budget is None:
        budget = 4 * len(f.body)
    if budget < 0:
        raise ValueError("budget must be >= 0")
    f, _ = dce(f)
    res = RewriteResult(f)
    seen = {fingerprint(f)}
    start = 0
    while True:
        fired = None
        for idx in range(start, len(f.body)):
            cands = m.match_at(f, idx)
            if cands:
                fired = cands[0]
                break
        if fired is None:
            break
        if res.steps >= budget:
            res.status = "budget"
            res.trace.append(f"budget exhausted after {res.steps} steps")
            break
        g, _ = dce(apply_candidate(f, fired))
        res.steps += 1
        res.trace.append(f"fire {fired.rule.name} @%{fired.root}")
        fp = fingerprint(g)
        if fp in seen:
            res.status = "cycle"
            res.trace.append(f"cycle detected after {res.steps} steps: @%{fired.root} repeats an earlier function")
            res.function = g
            break
        seen.add(fp)
        start = _first_diff(f.body, g.body)
        f = res.function = g
    return res


__all__ = [
    "ANY", "SYM", "Candidate", "Matcher", "RewriteResult", "apply_candidate", "binding_ok",
    "compile_rules", "fingerprint", "match_at", "rewrite_greedy", "rewrite_greedy_ex",
    "candidate_holds",
]
