"""Rules-file parser.

A rules file is a sequence of blocks separated by blank lines::

    name: xor-cancel
    pre: C == width(%x) - 1        (optional)
    %t = xor %x, %y
    %r = xor %x, %t
    =>
    %r = %y

Instructions may also be written on one line separated by ``;`` (so the
whole rule fits on a line).  ``#`` starts a comment.
"""

from __future__ import annotations

from ..ir.core import FLAG_ORDER, OPCODES, ParseError, check_width
from ..ir.text import TokenStream, parse_opcode, tokenize
from . import pred as P
from .rule import PInstr, PLit, PSym, PVar, Rule, RuleError, RuleSyntaxError, RuleTypeError, UnboundError, check_wellformed


def _operand(ts: TokenStream):
    t = ts.next()
    if t.kind == "var":
        return PVar(t.text[1:])
    if t.kind == "int":
        return PLit(int(t.text))
    if t.kind == "type":
        w = check_width(int(t.text[1:]))
        return PLit(int(ts.expect("int").text), w)
    if t.kind == "ident" and t.text not in OPCODES and t.text not in FLAG_ORDER:
        return PSym(t.text)
    raise ts.error(f"expected operand, found {t.text!r}", t)


def _statement(ts: TokenStream):
    """Returns a PInstr, or ``(name, operand)`` for an alias line."""
    head = ts.expect("var")
    name = head.text[1:]
    ts.expect("punct", "=")
    if not (ts.at("ident") and ts.peek().text in OPCODES):
        return name, _operand(ts)
    op, cond, swapped, flags = parse_opcode(ts)
    width = None
    if ts.at("type") and not ts.at("int", offset=1):
        width = check_width(int(ts.next().text[1:]))
    ops = [_operand(ts)]
    while ts.at("punct", ","):
        ts.next()
        ops.append(_operand(ts))
    if swapped:
        ops.reverse()
    return PInstr(name, op, tuple(ops), tuple(f for f in FLAG_ORDER if f in flags), cond, width)


def _parse_body(text: str, name: str, pre) -> Rule:
    ts = TokenStream(tokenize(text, comment="#"))
    lhs, rhs, side = [], [], None
    replacement = None
    while not ts.done():
        if ts.at("punct", ";"):
            ts.next()
            continue
        if ts.at("arrow"):
            if side is not None:
                raise ts.error("more than one '=>'")
            side = "rhs"
            ts.next()
            continue
        st = _statement(ts)
        if side is None:
            if not isinstance(st, PInstr):
                raise RuleSyntaxError(f"{name}: alias '%{st[0]} = ...' only allowed on the RHS")
            lhs.append(st)
        else:
            if isinstance(st, PInstr):
                if replacement is not None:
                    raise RuleSyntaxError(f"{name}: nothing may follow the root alias")
                rhs.append(st)
            else:
                replacement = st
    if side is None:
        raise RuleSyntaxError(f"{name}: missing '=>'")
    if not lhs:
        raise RuleSyntaxError(f"{name}: empty LHS")
    root = lhs[-1].name
    if replacement is not None:
        alias_name, operand = replacement
        if alias_name != root:
            raise RuleSyntaxError(f"{name}: RHS alias must name the root %{root}")
        replacement = operand
    return Rule(name, tuple(lhs), tuple(rhs), pre, replacement)


def _raise_for(rule: Rule, diags):
    errors = [d for d in diags if d.level == "error"]
    if not errors:
        return
    msg = f"{rule.name}: " + "; ".join(d.message for d in errors)
    if any("unbound" in d.message for d in errors):
        raise UnboundError(msg)
    if any("type error" in d.message or "width" in d.message for d in errors):
        raise RuleTypeError(msg)
    raise RuleError(msg)


def parse_rule(text: str, name: str = "rule", pre: str | None = None) -> Rule:
    """Parse one rule given as instruction text (``LHS => RHS``)."""
    p = P.parse_pred(pre) if pre else None
    r = _parse_body(text, name, p)
    _raise_for(r, check_wellformed(r))
    return r


def _blocks(text: str):
    block, start = [], 1
    for n, line in enumerate(text.splitlines(), 1):
        if line.strip():
            if not block:
                start = n
            block.append(line)
        elif block:
            yield start, block
            block = []
    if block:
        yield start, block


def parse_rules(text: str) -> list[Rule]:
    rules = []
    for start, lines in _blocks(text):
        name, pre, body = None, None, []
        for k, line in enumerate(lines):
            s = line.strip()
            if s.startswith("#"):
                continue
            if s.startswith("name:") and name is None and not body:
                name = s[5:].strip()
            elif s.startswith("pre:") and pre is None and not body:
                try:
                    pre = P.parse_pred(s[4:].strip())
                except P.PredSyntaxError as e:
                    raise RuleSyntaxError(f"line {start + k}: {e}") from None
            else:
                body.append(line)
        if not body:
            continue
        name = name or f"rule{len(rules) + 1}"
        try:
            r = _parse_body("\n".join(body), name, pre)
        except ParseError as e:
            raise RuleSyntaxError(f"{name} (block at line {start}): {e}") from None
        _raise_for(r, check_wellformed(r))
        rules.append(r)
    return rules


def load_rules(path) -> list[Rule]:
    with open(path) as fh:
        return parse_rules(fh.read())
