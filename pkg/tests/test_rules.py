from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from peepkit.ir import Const, Var
from peepkit.rules import (
    PVar,
    RuleError,
    RuleTypeError,
    UnboundError,
    check_wellformed,
    eval_precondition,
    format_rule,
    format_rules,
    instantiate_rhs,
    load_rules,
    parse_pred,
    parse_rule,
    parse_rules,
)

DATA = Path(__file__).resolve().parents[1] / "src" / "peepkit" / "data"

XOR_CANCEL = "%t = xor %x, %y\n%r = xor %x, %t\n=>\n%r = %y"
DEMORGAN = "%na = xor %a, -1\n%nb = xor %b, -1\n%r = and %na, %nb\n=>\n%o = or %a, %b\n%r = xor %o, -1"


def test_xor_cancel_parses_nonlinear():
    r = parse_rule(XOR_CANCEL, "xor-cancel")
    assert r.inputs == ["x", "y"]
    xs = [o for ins in r.lhs for o in ins.operands if o == PVar("x")]
    assert len(xs) == 2
    assert r.replacement == PVar("y")


def test_demorgan_parses():
    r = parse_rule(DEMORGAN, "demorgan")
    assert len(r.lhs) == 3 and len(r.rhs) == 2
    assert r.root == "r"


def test_semicolon_separated_form():
    r = parse_rule("%t = xor %x, %y ; %r = xor %x, %t => %r = %y", "x")
    assert r == parse_rule(XOR_CANCEL, "x")


def test_unbound_rhs_symbol():
    with pytest.raises(UnboundError):
        parse_rule("%r = add %x, %y\n=>\n%r = add %x, %z")


def test_rules_file_order_preserved():
    rules = load_rules(DATA / "seed.rules")
    assert [r.name for r in rules] == ["xor-cancel", "demorgan-and-of-nots", "xor-or-absorb", "low-bit-flip"]
    again = parse_rules(format_rules(rules))
    assert [format_rule(r) for r in again] == [format_rule(r) for r in rules]


def test_gcc_rule_is_wellformed():
    r = parse_rule("%t = xor %a, %b\n%r = or %t, %a\n=>\n%r = or %a, %b", "gcc")
    assert [d for d in check_wellformed(r) if d.level == "error"] == []


def test_vacuous_precondition_warns():
    r = parse_rule("%r = add %x, C\n=>\n%r = %x", "vac", pre="1 == 2")
    diags = check_wellformed(r)
    assert any(d.level == "warning" and "vacuous" in d.message for d in diags)


def test_select_arm_width_mismatch_is_type_error():
    # one arm is i1 (a comparison), the other is pinned to i8
    text = "%c = icmp eq %x, %y\n%a = add i8 %x, 1\n%r = select %c, %c, %a\n=>\n%r = %c"
    with pytest.raises(RuleTypeError):
        parse_rule(text, "bad")


def test_precondition_examples():
    pre = parse_pred("C == width(%x) - 1")
    assert eval_precondition(pre, {"C": Const(31, 32)}, {"x": 32}) is True
    assert eval_precondition(pre, {"C": Const(30, 32)}, {"x": 32}) is False
    assert eval_precondition(parse_pred("isPowerOf2(C)"), {"C": Const(0, 8)}) is False


def test_precondition_unbound_symbol():
    with pytest.raises(Exception):
        eval_precondition(parse_pred("C == 1"), {}, {})


@given(st.integers(1, 16), st.data())
def test_is_power_of_two_matches_popcount(w, data):
    c = data.draw(st.integers(0, (1 << w) - 1))
    got = eval_precondition(parse_pred("isPowerOf2(C)"), {"C": Const(c, w)})
    assert got == (bin(c).count("1") == 1)


@given(st.integers(2, 12), st.data())
def test_precondition_arithmetic_is_modular(w, data):
    a = data.draw(st.integers(0, (1 << w) - 1))
    b = data.draw(st.integers(0, (1 << w) - 1))
    env = {"A": Const(a, w), "B": Const(b, w)}
    m = (1 << w) - 1
    assert eval_precondition(parse_pred("A - ~B - 1 == A + B"), env) is True
    assert eval_precondition(parse_pred("(A ^ B) == (A | B) - (A & B)"), env) is True
    assert eval_precondition(parse_pred("A ult B"), env) == (a < b)
    assert eval_precondition(parse_pred("A * B == A * B"), env) is True
    assert eval_precondition(parse_pred(f"A + B == {(a + b) & m}"), env) is True


def test_instantiate_running_example_i8():
    r = load_rules(DATA / "seed.rules")[3]
    x, s, a, root = Var("x", 8), Var("s", 8), Var("a", 8), Var("r", 8)
    binding = {"x": x, "C": Const(7, 8), "s": s, "a": a, "r": root}
    new, rep = instantiate_rhs(r, binding, taken={"x", "s", "a", "r"})
    assert [(i.op, i.width) for i in new] == [("xor", 8), ("and", 8)]
    assert new[0].operands == (x, Const(255, 8))
    assert new[1].name == "r" and new[1].operands[1] == Const(1, 8)
    assert rep == root


def test_instantiate_xor_cancel_aliases():
    r = parse_rule(XOR_CANCEL, "xor-cancel")
    x, y = Var("x", 8), Var("y", 8)
    new, rep = instantiate_rhs(r, {"x": x, "y": y, "t": Var("t", 8), "r": Var("r", 8)})
    assert new == [] and rep == y


def test_instantiate_demorgan_i4():
    r = parse_rule(DEMORGAN, "demorgan")
    a, b = Var("a", 4), Var("b", 4)
    binding = {"a": a, "b": b, "na": Var("na", 4), "nb": Var("nb", 4), "r": Var("r", 4)}
    new, rep = instantiate_rhs(r, binding, taken={"a", "b", "na", "nb", "r"})
    assert len(new) == 2 < len(r.lhs)


def test_monomorphic_rule_keeps_widths():
    r = load_rules(DATA / "lowbit32.rules")[0]
    assert all(i.width == 32 for i in r.lhs)
    with pytest.raises(RuleError):
        parse_rule("%r = add i8 %x, %y\n=>\n%r = sub i16 %x, %y")
