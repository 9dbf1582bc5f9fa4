"""SMT-LIB (QF_BV) encoding of refinement queries and a subprocess solver port.

Every value ``v`` becomes two definitions: its bits and a boolean that is
true when it is poison.  A refinement query asserts the precondition and
the negated refinement condition, so ``sat`` means a counterexample and
the model gives it.
"""

from __future__ import annotations

import os
import re
import shutil
import subprocess
import threading

from ..ir import CAST_OPS, Const, Function, mask
from ..rules import pred as P
from .verdict import Query, Unknown, Valid, counterexample_from_args


class SolverError(Exception):
    pass


def _sym(name: str) -> str:
    return f"|{name}|"


def _bv(value: int, w: int) -> str:
    return f"(_ bv{value & mask(w)} {w})"


def _sort(w: int) -> str:
    return f"(_ BitVec {w})"


def _or(parts) -> str:
    parts = [p for p in parts if p != "false"]
    if not parts:
        return "false"
    if len(parts) == 1:
        return parts[0]
    return "(or " + " ".join(parts) + ")"


def _instr_terms(ins, a) -> tuple[str, list[str]]:
    """SMT term of one instruction and the extra poison conditions it adds."""
    op, w, flags = ins.op, ins.width, ins.flags
    x = a[0]
    if op == "zext":
        return f"((_ zero_extend {w - ins.operands[0].width}) {x})", []
    if op == "sext":
        return f"((_ sign_extend {w - ins.operands[0].width}) {x})", []
    if op == "trunc":
        return f"((_ extract {w - 1} 0) {x})", []
    if op == "select":
        return f"(ite (= {a[0]} #b1) {a[1]} {a[2]})", []
    y = a[1]
    if op == "icmp":
        rel = {"eq": "=", "ne": "distinct", "ult": "bvult", "ule": "bvule",
               "slt": "bvslt", "sle": "bvsle"}[ins.cond]
        return f"(ite ({rel} {x} {y}) #b1 #b0)", []
    simple = {"and": "bvand", "or": "bvor", "xor": "bvxor", "lshr": "bvlshr", "ashr": "bvashr"}
    if op in simple:
        extra = [f"(bvuge {y} {_bv(w, w)})"] if op in ("lshr", "ashr") else []
        return f"({simple[op]} {x} {y})", extra
    fn = {"add": "bvadd", "sub": "bvsub", "mul": "bvmul", "shl": "bvshl"}[op]
    term = f"({fn} {x} {y})"
    extra = []
    if op == "shl":
        extra.append(f"(bvuge {y} {_bv(w, w)})")
        if "nuw" in flags:
            extra.append(f"(not (= (bvlshr {term} {y}) {x}))")
        if "nsw" in flags:
            extra.append(f"(not (= (bvashr {term} {y}) {x}))")
        return term, extra
    if op in ("add", "sub"):
        if "nuw" in flags:
            extra.append(f"(bvult {term} {x})" if op == "add" else f"(bvult {x} {y})")
        if "nsw" in flags:
            sx, sy = f"((_ sign_extend 1) {x})", f"((_ sign_extend 1) {y})"
            extra.append(f"(not (= ((_ sign_extend 1) {term}) ({fn} {sx} {sy})))")
        return term, extra
    # mul
    if "nuw" in flags:
        zx, zy = f"((_ zero_extend {w}) {x})", f"((_ zero_extend {w}) {y})"
        extra.append(f"(not (= (bvmul {zx} {zy}) ((_ zero_extend {w}) {term})))")
    if "nsw" in flags:
        sx, sy = f"((_ sign_extend {w}) {x})", f"((_ sign_extend {w}) {y})"
        extra.append(f"(not (= (bvmul {sx} {sy}) ((_ sign_extend {w}) {term})))")
    return term, extra


def encode_function(f: Function, prefix: str, env: dict) -> tuple[list[str], list[tuple[str, str]]]:
    """Define-fun lines for ``f``'s body.

    ``env`` maps parameter names to (bits term, poison term).  Returns the
    lines and the (bits, poison) terms of the returned values.
    """
    env = dict(env)
    lines = []

    def get(o):
        if isinstance(o, Const):
            return _bv(o.value, o.width), "false"
        return env[o.name]

    for ins in f.body:
        args = [get(o) for o in ins.operands]
        term, extra = _instr_terms(ins, [t for t, _ in args])
        v, p = _sym(f"{prefix}{ins.name}"), _sym(f"{prefix}{ins.name}!p")
        lines.append(f"(define-fun {v} () {_sort(ins.width)} {term})")
        lines.append(f"(define-fun {p} () Bool {_or([q for _, q in args] + extra)})")
        env[ins.name] = (v, p)
    return lines, [get(o) for o in f.rets]


class _PredEncoder:
    """Typed translation of a precondition; untyped parts are folded in Python."""

    def __init__(self, consts: dict, widths: dict):
        self.consts = consts  # symbol -> (term, width)
        self.widths = widths

    def unify(self, a, b, where):
        (ka, va, wa), (kb, vb, wb) = a, b
        if wa is not None and wb is not None and wa != wb:
            raise P.PredTypeError(f"width mismatch in {where}: i{wa} vs i{wb}")
        w = wa if wa is not None else wb
        if w is not None:
            if ka == "int":
                va = _bv(va, w)
            if kb == "int":
                vb = _bv(vb, w)
        return va, vb, w

    def num(self, e):
        if isinstance(e, P.Lit):
            return "int", e.value, None
        if isinstance(e, P.Sym):
            if e.name not in self.consts:
                raise P.UnboundSymbolError(f"unbound symbol {e.name}")
            t, w = self.consts[e.name]
            return "bv", t, w
        if isinstance(e, P.WidthOf):
            if e.var not in self.widths:
                raise P.UnboundSymbolError(f"unbound variable %{e.var}")
            return "int", self.widths[e.var], None
        if isinstance(e, P.Unary) and e.op in ("~", "-"):
            k, v, w = self.num(e.arg)
            if k == "int":
                return "int", ~v if e.op == "~" else -v, None
            return "bv", f"({'bvnot' if e.op == '~' else 'bvneg'} {v})", w
        if isinstance(e, P.Binary) and e.op in P.ARITH:
            a, b = self.num(e.lhs), self.num(e.rhs)
            if a[2] is None and b[2] is None:
                x, y = a[1], b[1]
                r = {"+": lambda: x + y, "-": lambda: x - y, "*": lambda: x * y,
                     "&": lambda: x & y, "|": lambda: x | y, "^": lambda: x ^ y,
                     "<<": lambda: x << min(y, 4096), ">>": lambda: x >> min(y, 4096)}[e.op]()
                return "int", r, None
            x, y, w = self.unify(a, b, e.op)
            fn = {"+": "bvadd", "-": "bvsub", "*": "bvmul", "&": "bvand", "|": "bvor",
                  "^": "bvxor", "<<": "bvshl", ">>": "bvlshr"}[e.op]
            return "bv", f"({fn} {x} {y})", w
        raise P.PredTypeError(f"cannot encode {e!r} as an integer")

    def truth(self, e) -> str:
        if isinstance(e, P.BoolLit):
            return "true" if e.value else "false"
        if isinstance(e, P.Unary) and e.op == "!":
            return f"(not {self.truth(e.arg)})"
        if isinstance(e, P.Binary) and e.op in ("&&", "||"):
            return f"({'and' if e.op == '&&' else 'or'} {self.truth(e.lhs)} {self.truth(e.rhs)})"
        if isinstance(e, P.Binary) and e.op in P.COMPARISONS:
            a, b = self.num(e.lhs), self.num(e.rhs)
            if a[2] is None and b[2] is None:
                ok = P.eval_precondition(e, {}, self.widths)
                return "true" if ok else "false"
            x, y, _ = self.unify(a, b, e.op)
            if e.op == "==":
                return f"(= {x} {y})"
            if e.op == "!=":
                return f"(distinct {x} {y})"
            return f"(bv{e.op} {x} {y})"
        if isinstance(e, P.Call) and e.fn == "isPowerOf2":
            k, v, w = self.num(e.args[0])
            if k == "int":
                return "true" if v > 0 and v & (v - 1) == 0 else "false"
            return f"(and (distinct {v} {_bv(0, w)}) (= (bvand {v} (bvsub {v} {_bv(1, w)})) {_bv(0, w)}))"
        raise P.PredTypeError("integer used where a boolean is expected")


def encode_query(q: Query) -> str:
    """Deterministic QF_BV text whose satisfying models are counterexamples."""
    out = ["(set-logic QF_BV)"]
    lenv, renv = {}, {}
    for lp, rp in zip(q.lhs.params, q.rhs.params):
        out.append(f"(declare-fun {_sym(lp.name)} () {_sort(lp.width)})")
        lenv[lp.name] = (_sym(lp.name), "false")
        renv[rp.name] = (_sym(lp.name), "false")
    lines, lres = encode_function(q.lhs, "l.", lenv)
    out += lines
    lines, rres = encode_function(q.rhs, "r.", renv)
    out += lines
    if q.pre is not None:
        consts = {p.name: (_sym(p.name), p.width) for p in q.consts}
        out.append(f"(assert {_PredEncoder(consts, q.var_widths).truth(q.pre)})")
    bad = [f"(and (not {lp}) (or {rp} (distinct {lv} {rv})))" for (lv, lp), (rv, rp) in zip(lres, rres)]
    out.append(f"(assert {_or(bad)})")
    out.append("(check-sat)")
    names = " ".join(_sym(p.name) for p in q.lhs.params)
    if names:
        out.append(f"(get-value ({names}))")
    return "\n".join(out) + "\n"


def encode_hole_query(skel: Function, n_inputs: int, examples) -> str:
    """Find hole values (params after ``n_inputs``) meeting every example.

    ``examples`` is a list of (input values, target results); a poison
    target (None) places no constraint on that output.
    """
    out = ["(set-logic QF_BV)"]
    holes = skel.params[n_inputs:]
    for h in holes:
        out.append(f"(declare-fun {_sym(h.name)} () {_sort(h.width)})")
    for k, (ins, targets) in enumerate(examples):
        env = {p.name: (_bv(v, p.width), "false") for p, v in zip(skel.params, ins)}
        env.update({h.name: (_sym(h.name), "false") for h in holes})
        lines, res = encode_function(skel, f"e{k}.", env)
        out += lines
        for (v, p), t, o in zip(res, targets, skel.rets):
            if t is not None:
                out.append(f"(assert (and (not {p}) (= {v} {_bv(t, o.width)})))")
    out.append("(check-sat)")
    if holes:
        out.append("(get-value (" + " ".join(_sym(h.name) for h in holes) + "))")
    return "\n".join(out) + "\n"


_MODEL_RE = re.compile(
    r"\(\s*(\|[^|]*\||[^\s()]+)\s+(#x[0-9a-fA-F]+|#b[01]+|\(_\s+bv(\d+)\s+\d+\))\s*\)"
)


def parse_model(text: str) -> dict[str, int]:
    model = {}
    for m in _MODEL_RE.finditer(text):
        name = m.group(1).strip("|")
        lit = m.group(2)
        if lit.startswith("#x"):
            model[name] = int(lit[2:], 16)
        elif lit.startswith("#b"):
            model[name] = int(lit[2:], 2)
        else:
            model[name] = int(m.group(3))
    return model


class SolverPort:
    """Runs an SMT-LIB solver binary; one request at a time per port."""

    def __init__(self, path: str = "z3", timeout: float = 10.0):
        resolved = shutil.which(path) or (path if os.path.exists(path) else None)
        if resolved is None:
            raise SolverError(f"solver not found: {path}")
        self.path = resolved
        self.timeout = timeout
        self._lock = threading.Lock()

    def _argv(self):
        base = os.path.basename(self.path)
        if "cvc" in base:
            return [self.path, "--lang", "smt2", "--produce-models", f"--tlimit={int(self.timeout * 1000)}"]
        if "bitwuzla" in base or "boolector" in base:
            return [self.path, "--produce-models"]
        return [self.path, "-in", "-smt2", f"-T:{max(1, int(round(self.timeout)))}"]

    def submit(self, text: str) -> tuple[str, dict]:
        """Returns ("sat"|"unsat"|"unknown", model)."""
        with self._lock:
            try:
                proc = subprocess.run(self._argv(), input=text, capture_output=True,
                                      text=True, timeout=self.timeout + 5)
            except subprocess.TimeoutExpired:
                return "unknown", {}
            except OSError as e:
                raise SolverError(str(e)) from None
        lines = proc.stdout.strip().splitlines()
        status = lines[0].strip() if lines else ""
        if status not in ("sat", "unsat"):
            return "unknown", {"reason": (status or proc.stderr.strip() or "no output")[:200]}
        return status, parse_model(proc.stdout) if status == "sat" else {}


def find_solver() -> str | None:
    for name in ("z3", "cvc5", "bitwuzla"):
        p = shutil.which(name)
        if p:
            return p
    return None


class SolverBackend:
    name = "solver"

    def __init__(self, path: str | None = None, timeout: float = 10.0):
        path = path or find_solver()
        if path is None:
            raise SolverError("no SMT solver found on PATH")
        self.port = SolverPort(path, timeout)

    def check(self, q: Query):
        try:
            status, model = self.port.submit(encode_query(q))
        except SolverError as e:
            return Unknown(f"solver failure: {e}", q.label)
        if status == "unsat":
            return Valid([q.label], ["solver"])
        if status != "sat":
            return Unknown(f"solver returned unknown/timeout {model.get('reason', '')}".strip(), q.label)
        try:
            args = [model.get(p.name, 0) for p in q.lhs.params]
            cex = counterexample_from_args(q, args)
        except Exception as e:  # a bad model must never be reported as a proof
            return Unknown(f"unusable solver model: {e}", q.label)
        if not cex.reproduces():
            return Unknown("solver model does not replay", q.label)
        return cex

    def solve_holes(self, skel: Function, n_inputs: int, examples):
        """Hole values as a list, or None when unsat / unknown."""
        status, model = self.port.submit(encode_hole_query(skel, n_inputs, examples))
        if status != "sat":
            return None
        return [model.get(h.name, 0) for h in skel.params[n_inputs:]]
