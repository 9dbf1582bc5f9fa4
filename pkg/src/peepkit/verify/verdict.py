from __future__ import annotations

from dataclasses import dataclass, field

from ..ir import POISON, Function, evaluate, to_signed


@dataclass
class Query:
    """One monomorphic refinement question: does ``rhs`` refine ``lhs``?

    Both functions share a parameter list; the first ``n_inputs`` are
    program inputs, the rest are symbolic constants named after their
    symbol.  ``pre`` (if any) restricts the constants; ``var_widths``
    resolves ``width(%x)`` inside it.
    """

    lhs: Function
    rhs: Function
    n_inputs: int
    pre: object = None
    var_widths: dict = field(default_factory=dict)
    label: str = ""

    @property
    def inputs(self):
        return self.lhs.params[: self.n_inputs]

    @property
    def consts(self):
        return self.lhs.params[self.n_inputs:]


class Verdict:
    is_valid = False
    is_counterexample = False
    is_unknown = False


@dataclass
class Valid(Verdict):
    checked: list = field(default_factory=list)
    backends: list = field(default_factory=list)
    is_valid = True

    def __str__(self):
        return "Valid"

    def to_dict(self):
        return {"verdict": "valid", "checked": self.checked, "backends": self.backends}


def _fmt(v, w):
    return "poison" if v is POISON else str(to_signed(v, w))


@dataclass
class Counterexample(Verdict):
    """Inputs (and constants) on which the RHS fails to refine the LHS."""

    inputs: dict
    consts: dict
    lhs_result: tuple
    rhs_result: tuple
    lhs_fn: Function
    rhs_fn: Function
    label: str = ""
    is_counterexample = True

    @property
    def width(self):
        ws = {p.width for p in self.lhs_fn.params} or {o.width for o in self.lhs_fn.rets}
        return max(ws)

    def arguments(self):
        vals = {**self.inputs, **self.consts}
        return [vals[p.name] for p in self.lhs_fn.params]

    def replay(self) -> tuple[tuple, tuple]:
        args = self.arguments()
        return evaluate(self.lhs_fn, args), evaluate(self.rhs_fn, args)

    def reproduces(self) -> bool:
        lhs, rhs = self.replay()
        if (lhs, rhs) != (self.lhs_result, self.rhs_result):
            return False
        return any(l is not POISON and (r is POISON or r != l) for l, r in zip(lhs, rhs))

    def __str__(self):
        ws = {p.name: p.width for p in self.lhs_fn.params}
        parts = [f"%{k}={_fmt(v, ws[k])}" for k, v in self.inputs.items()]
        parts += [f"{k}={_fmt(v, ws[k])}" for k, v in self.consts.items()]
        rw = [o.width for o in self.lhs_fn.rets]
        lhs = ", ".join(_fmt(v, w) for v, w in zip(self.lhs_result, rw))
        rhs = ", ".join(_fmt(v, w) for v, w in zip(self.rhs_result, rw))
        head = f"Counterexample[{self.label}]" if self.label else "Counterexample"
        return f"{head}: {' '.join(parts)} -> lhs {lhs}, rhs {rhs}"

    def to_dict(self):
        def enc(v):
            return None if v is POISON else v

        return {
            "verdict": "counterexample",
            "label": self.label,
            "inputs": self.inputs,
            "consts": self.consts,
            "lhs": [enc(v) for v in self.lhs_result],
            "rhs": [enc(v) for v in self.rhs_result],
        }


@dataclass
class Unknown(Verdict):
    reason: str
    label: str = ""
    is_unknown = True

    def __str__(self):
        return f"Unknown ({self.reason})"

    def to_dict(self):
        return {"verdict": "unknown", "reason": self.reason, "label": self.label}


def counterexample_from_args(q: Query, args: list[int]) -> Counterexample:
    lhs = evaluate(q.lhs, args)
    rhs = evaluate(q.rhs, args)
    names = [p.name for p in q.lhs.params]
    return Counterexample(
        dict(zip(names[: q.n_inputs], args[: q.n_inputs])),
        dict(zip(names[q.n_inputs:], args[q.n_inputs:])),
        lhs, rhs, q.lhs, q.rhs, q.label,
    )
