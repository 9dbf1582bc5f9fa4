"""Textual IR: tokenizer, parser and canonical printer.

Grammar::

    func @NAME(%id:iW, ...) {
      %id = OPCODE [FLAGS] iW OPERAND, ...
      ret OPERAND, ...
    }

``icmp`` carries its predicate after the opcode and its ``iW`` names the
operand width.  Casts name the result width.  A literal whose width cannot
be inferred from context (cast sources, returned constants) is written
with a type prefix, e.g. ``ret i8 0``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .core import (
    CAST_OPS,
    FLAG_ORDER,
    ICMP_CONDS,
    ICMP_SWAPPED,
    OPCODES,
    Const,
    Function,
    Instruction,
    IRError,
    ParseError,
    SSAError,
    Var,
    WidthError,
    check_width,
    operand_arity,
)

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<arrow>=>)
  | (?P<var>%[A-Za-z0-9_.]+)
  | (?P<glob>@[A-Za-z0-9_.\-]+)
  | (?P<type>i[0-9]+(?![A-Za-z0-9_.]))
  | (?P<int>-?[0-9]+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_.]*)
  | (?P<punct>[(){},=:;])
    """,
    re.VERBOSE,
)


@dataclass
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str, comment: str = ";") -> list[Token]:
    """Split ``text`` into tokens, dropping whitespace and comments.

    ``comment`` starts a comment running to end of line; when it is not
    ``;`` the semicolon is returned as a separator token instead.
    """
    out = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        if text.startswith(comment, pos):
            end = text.find("\n", pos)
            pos = len(text) if end < 0 else end
            continue
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind != "ws":
            out.append(Token(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    return out


class TokenStream:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.pos = 0

    def peek(self, offset: int = 0) -> Token | None:
        k = self.pos + offset
        return self.toks[k] if k < len(self.toks) else None

    def at(self, kind: str, text: str | None = None, offset: int = 0) -> bool:
        t = self.peek(offset)
        return t is not None and t.kind == kind and (text is None or t.text == text)

    def next(self) -> Token:
        t = self.peek()
        if t is None:
            last = self.toks[-1] if self.toks else Token("eof", "", 0, 0)
            raise ParseError("unexpected end of input", last.line, last.col)
        self.pos += 1
        return t

    def expect(self, kind: str, text: str | None = None) -> Token:
        t = self.next()
        if t.kind != kind or (text is not None and t.text != text):
            want = text or kind
            raise ParseError(f"expected {want!r}, found {t.text!r}", t.line, t.col)
        return t

    def error(self, msg: str, tok: Token | None = None) -> ParseError:
        tok = tok or self.peek() or (self.toks[-1] if self.toks else None)
        if tok is None:
            return ParseError(msg)
        return ParseError(msg, tok.line, tok.col)

    def done(self) -> bool:
        return self.pos >= len(self.toks)


def parse_width(tok: Token) -> int:
    w = int(tok.text[1:])
    try:
        return check_width(w)
    except WidthError as e:
        raise WidthError(f"{tok.line}:{tok.col}: {e}") from None


def parse_opcode(ts: TokenStream) -> tuple[str, str | None, bool, tuple[str, ...]]:
    """Parse ``OPCODE [cond] [FLAGS]``; returns (op, cond, swapped, flags)."""
    t = ts.expect("ident")
    op = t.text
    if op not in OPCODES:
        raise ts.error(f"unknown opcode {op!r}", t)
    cond, swapped = None, False
    if op == "icmp":
        c = ts.expect("ident")
        if c.text in ICMP_SWAPPED:
            cond, swapped = ICMP_SWAPPED[c.text], True
        elif c.text in ICMP_CONDS:
            cond = c.text
        else:
            raise ts.error(f"unknown icmp predicate {c.text!r}", c)
    flags = []
    while ts.at("ident") and ts.peek().text in FLAG_ORDER:
        f = ts.next()
        if f.text in flags:
            raise ts.error(f"duplicate flag {f.text}", f)
        flags.append(f.text)
    return op, cond, swapped, tuple(flags)


def context_widths(op: str, w: int) -> list[int | None]:
    """Width a bare literal takes at each operand position."""
    if op == "select":
        return [1, w, w]
    if op in CAST_OPS:
        return [None]
    return [w, w]


def _parse_operand(ts: TokenStream, env: dict[str, int], width: int | None):
    t = ts.next()
    if t.kind == "var":
        name = t.text[1:]
        if name not in env:
            raise SSAError(f"{t.line}:{t.col}: %{name} used before definition")
        return Var(name, env[name])
    if t.kind == "type":
        w = parse_width(t)
        lit = ts.expect("int")
        return Const(int(lit.text), w)
    if t.kind == "int":
        if width is None:
            raise ts.error("literal needs an explicit type here (e.g. 'i8 5')", t)
        return Const(int(t.text), width)
    raise ts.error(f"expected operand, found {t.text!r}", t)


def _parse_instruction(ts: TokenStream, env: dict[str, int]) -> Instruction:
    head = ts.expect("var")
    name = head.text[1:]
    ts.expect("punct", "=")
    op, cond, swapped, flags = parse_opcode(ts)
    w = parse_width(ts.expect("type"))
    ctx = context_widths(op, w)
    operands = [_parse_operand(ts, env, ctx[0])]
    while ts.at("punct", ","):
        ts.next()
        k = len(operands)
        operands.append(_parse_operand(ts, env, ctx[k] if k < len(ctx) else None))
    if len(operands) != operand_arity(op):
        raise ts.error(f"{op} takes {operand_arity(op)} operands, got {len(operands)}", head)
    if swapped:
        operands.reverse()
    if name in env:
        raise SSAError(f"{head.line}:{head.col}: %{name} defined twice")
    try:
        ins = Instruction(name, op, 1 if op == "icmp" else w, tuple(operands), flags, cond)
    except WidthError as e:
        raise WidthError(f"{head.line}:{head.col}: {e}") from None
    except IRError as e:
        raise ParseError(str(e), head.line, head.col) from None
    env[name] = ins.width
    return ins


def _parse_function(ts: TokenStream) -> Function:
    start = ts.expect("ident", "func")
    fname = ts.expect("glob").text[1:]
    ts.expect("punct", "(")
    env: dict[str, int] = {}
    params = []
    while not ts.at("punct", ")"):
        if params:
            ts.expect("punct", ",")
        v = ts.expect("var")
        ts.expect("punct", ":")
        w = parse_width(ts.expect("type"))
        if v.text[1:] in env:
            raise SSAError(f"{v.line}:{v.col}: {v.text} defined twice")
        env[v.text[1:]] = w
        params.append(Var(v.text[1:], w))
    ts.expect("punct", ")")
    ts.expect("punct", "{")
    body = []
    while not ts.at("ident", "ret"):
        if ts.done():
            raise ts.error("missing 'ret'", start)
        body.append(_parse_instruction(ts, env))
    ts.expect("ident", "ret")
    rets = [_parse_operand(ts, env, None)]
    while ts.at("punct", ","):
        ts.next()
        rets.append(_parse_operand(ts, env, None))
    ts.expect("punct", "}")
    return Function(fname, tuple(params), tuple(body), tuple(rets))


def parse_module(text: str) -> list[Function]:
    ts = TokenStream(tokenize(text))
    funcs = []
    while not ts.done():
        funcs.append(_parse_function(ts))
    names = [f.name for f in funcs]
    if len(set(names)) != len(names):
        raise ParseError("duplicate function name")
    return funcs


def parse_function(text: str) -> Function:
    funcs = parse_module(text)
    if len(funcs) != 1:
        raise ParseError(f"expected exactly one function, found {len(funcs)}")
    return funcs[0]


def format_operand(o, typed: bool = False) -> str:
    if isinstance(o, Const):
        return f"i{o.width} {o.signed}" if typed else str(o.signed)
    return "%" + o.name


def print_instruction(ins: Instruction) -> str:
    head = ins.opcode
    if ins.flags:
        head += " " + " ".join(ins.flags)
    w = ins.operands[0].width if ins.op == "icmp" else ins.width
    typed = ins.op in CAST_OPS
    ops = ", ".join(format_operand(o, typed) for o in ins.operands)
    return f"%{ins.name} = {head} i{w} {ops}"


def print_function(f: Function, oneline: bool = False) -> str:
    params = ", ".join(f"%{p.name}:i{p.width}" for p in f.params)
    lines = [print_instruction(i) for i in f.body]
    lines.append("ret " + ", ".join(format_operand(o, True) for o in f.rets))
    if oneline:
        return f"func @{f.name}({params}) {{ " + " ".join(lines) + " }"
    return f"func @{f.name}({params}) {{\n" + "".join(f"  {l}\n" for l in lines) + "}\n"


def print_module(funcs) -> str:
    return "\n".join(print_function(f) for f in funcs)
