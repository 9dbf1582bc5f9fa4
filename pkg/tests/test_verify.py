import itertools
import random
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from peepkit.ir import POISON, Const, evaluate, parse_function, print_function
from peepkit.rules import RuleError, eval_precondition, format_rule, load_rules, parse_rule
from peepkit.verify import (
    Counterexample,
    ExhaustiveBackend,
    SignatureMismatch,
    SolverBackend,
    Valid,
    check_refinement,
    encode_rule_query,
    find_solver,
    infer_flags,
    rule_queries,
    validate_translation,
    verify_rule,
)

from gen import random_rule_text
from oracles import all_args, ref_refines

DATA = Path(__file__).resolve().parents[1] / "src" / "peepkit" / "data"
EXH = ExhaustiveBackend()
needs_solver = pytest.mark.skipif(find_solver() is None, reason="no SMT solver installed")


def seed():
    return {r.name: r for r in load_rules(DATA / "seed.rules")}


def fn(name):
    return parse_function((DATA / name).read_text())


def oracle_valid(r, width):
    """Brute-force refinement of a rule over inputs and constants, via the reference evaluator."""
    for q in rule_queries(r, [width]):
        lhs, rhs = q.lhs, q.rhs
        for args in all_args(lhs):
            if q.pre is not None:
                names = [p.name for p in lhs.params]
                binding = {n: Const(a, p.width) for n, a, p in zip(names, args, lhs.params)
                           if n in r.symbols}
                if not eval_precondition(q.pre, binding, q.var_widths):
                    continue
            if not ref_refines(lhs, rhs, [args]):
                return False
    return True


def test_xor_cancel_valid():
    v = verify_rule(seed()["xor-cancel"], [4, 8])
    assert isinstance(v, Valid)


def test_demorgan_text_at_i4():
    v = check_refinement("%na = xor %a, -1 ; %nb = xor %b, -1 ; %r = and %na, %nb",
                         "%o = or %a, %b ; %r = xor %o, -1", widths=[4])
    assert v.is_valid


def test_increment_is_not_identity():
    v = check_refinement("%r = add %x, 1", "%r = %x", widths=[4])
    assert isinstance(v, Counterexample)
    assert v.inputs == {"x": 0}
    assert v.lhs_result == (1,) and v.rhs_result == (0,)
    assert v.reproduces()


def test_running_example_valid_with_precondition():
    v = verify_rule(seed()["low-bit-flip"], [4, 8, 16])
    assert v.is_valid


def test_running_example_without_precondition_fails():
    r = load_rules(DATA / "broken.rules")[0]
    v = verify_rule(r, [4])
    assert v.is_counterexample and v.reproduces()
    c = v.consts["C"]
    assert c != 3  # the only shift amount where the fold is right
    assert oracle_valid(r, 4) is False
    assert oracle_valid(seed()["low-bit-flip"], 4) is True


def test_gcc_rule_valid():
    assert verify_rule(seed()["xor-or-absorb"], [4, 8]).is_valid


def test_empty_width_set():
    with pytest.raises(ValueError):
        verify_rule(seed()["xor-cancel"], [])


def test_foo_translation_valid():
    assert validate_translation(fn("foo.ir"), fn("foo_opt.ir"), [4, 8]).is_valid
    assert validate_translation(fn("foo.ir"), fn("foo_opt.ir")).is_valid


def test_foo_xor_replaced_by_or_fails():
    foo = fn("foo.ir")
    bad = parse_function(print_function(foo).replace("xor", "or"))
    v = validate_translation(foo, bad, [4])
    assert v.is_counterexample and v.reproduces()
    small_before = parse_function(print_function(foo).replace("i32", "i4"))
    small_after = parse_function(print_function(bad).replace("i32", "i4"))
    assert not ref_refines(small_before, small_after, all_args(small_before))


def test_reflexive():
    for name in ("foo.ir", "bar.ir", "lowbit8.ir", "mixed.ir", "shapes.ir"):
        f = fn(name)
        assert validate_translation(f, f).is_valid


def test_signature_mismatch():
    with pytest.raises(SignatureMismatch):
        validate_translation(fn("foo.ir"), fn("bar.ir"))


def test_infer_flags_add_nuw_to_shl():
    r = parse_rule("%r = add nuw %x, %x\n=>\n%r = shl %x, 1", "dbl")
    g = infer_flags(r, [4, 8])
    assert g.rhs[0].flags == ("nuw",)
    assert verify_rule(g, [4, 8]).is_valid


def test_infer_flags_without_lhs_flags():
    r = parse_rule("%r = add %x, %x\n=>\n%r = shl %x, 1", "dbl")
    g = infer_flags(r, [4, 8])
    assert g.rhs[0].flags == ()
    # each single flag is refuted at width 4
    for f in ("nsw", "nuw"):
        v = verify_rule(parse_rule(f"%r = add %x, %x\n=>\n%r = shl {f} %x, 1", "x"), [4])
        assert v.is_counterexample


def test_infer_flags_no_flag_opcodes():
    r = seed()["xor-or-absorb"]
    assert infer_flags(r, [4]) == r


def test_infer_flags_rejects_invalid_rule():
    with pytest.raises(RuleError):
        infer_flags(load_rules(DATA / "broken.rules")[0], [4])


def test_infer_flags_is_maximal():
    r = parse_rule("%r = add nsw nuw %x, %x\n=>\n%r = shl %x, 1", "dbl")
    g = infer_flags(r, [4])
    assert set(g.rhs[0].flags) == {"nsw", "nuw"}


def test_exhaustive_over_budget_is_unknown():
    r = parse_rule("%r = add %x, %y\n=>\n%r = add %y, %x", "comm")
    v = EXH.check(rule_queries(r, [16])[0])
    assert v.is_unknown and not v.is_valid


def test_bitwise_rules_stay_exhaustive_at_i16():
    for r in seed().values():
        v = verify_rule(r, [16], EXH)
        assert v.is_valid and v.backends == ["exhaustive"]


def _bitwise_rule_text(rng):
    leaves = ["%x", "%y", "%z", "C", "-1", "0", "5"]
    ops = ("and", "or", "xor")
    n = rng.randint(1, 3)
    lines = [f"%t{k} = {rng.choice(ops)} {f'%t{k - 1}' if k else '%x'}, {rng.choice(leaves)}"
             for k in range(n)]
    lines[-1] = "%r" + lines[-1][len(f"%t{n - 1}"):]
    lhs = "\n".join(lines)
    bound = [v for v in ("%x", "%y", "%z", "C") if v in lhs]
    rhs = f"%r = {rng.choice(ops)} {rng.choice(bound)}, {rng.choice(bound + ['-1', '5'])}"
    return lhs + "\n=>\n" + rhs


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 10**6))
def test_bit_sliced_check_agrees_with_full_enumeration(seed_):
    from peepkit.verify.exhaustive import check, check_bitwise, is_bitwise, passing_constants

    try:
        r = parse_rule(_bitwise_rule_text(random.Random(seed_)), "bw")
    except RuleError:
        return
    for q in rule_queries(r, [4]):
        assert is_bitwise(q)
        full = check(q, 24)
        sliced = check_bitwise(q, passing_constants(q), 24)
        assert full.is_valid == sliced.is_valid
        if sliced.is_counterexample:
            assert sliced.reproduces()


def test_encode_deterministic():
    r = seed()["xor-cancel"]
    a, b = encode_rule_query(r, 8), encode_rule_query(r, 8)
    assert a == b and "(check-sat)" in a and "QF_BV" in a


@needs_solver
def test_solver_xor_cancel_unsat():
    s = SolverBackend()
    assert s.check(rule_queries(seed()["xor-cancel"], [8])[0]).is_valid


@needs_solver
def test_solver_increment_sat_and_replays():
    r = parse_rule("%r = add %x, 1\n=>\n%r = %x", "inc")
    v = SolverBackend().check(rule_queries(r, [4])[0])
    assert v.is_counterexample and v.reproduces()
    (x,) = v.inputs.values()
    assert evaluate(v.lhs_fn, v.arguments()) != evaluate(v.rhs_fn, v.arguments())
    assert x in range(16)


@needs_solver
def test_solver_identity_rule_unsat():
    r = parse_rule("%r = add %x, %y\n=>\n%r = add %x, %y", "id")
    assert SolverBackend().check(rule_queries(r, [8])[0]).is_valid


@needs_solver
def test_backend_agreement_on_corpus():
    s = SolverBackend()
    rules = load_rules(DATA / "seed.rules") + load_rules(DATA / "broken.rules") \
        + load_rules(DATA / "negation.rules") + load_rules(DATA / "negation_literal.rules")
    for r in rules:
        for w in (4, 8):
            for q in rule_queries(r, [w]):
                if not EXH.feasible(q):
                    continue
                a, b = EXH.check(q), s.check(q)
                assert a.is_valid == b.is_valid, (r.name, w)


def test_negation_rules():
    for r in load_rules(DATA / "negation.rules"):
        assert verify_rule(r, [4, 8]).is_valid, r.name
    bad = load_rules(DATA / "negation_literal.rules")[0]
    assert verify_rule(bad, [4]).is_counterexample


def test_transitive_spot_check():
    # ~a & ~b  ->  ~(a|b), and ~(a|b) -> xor(or(a,b), -1) is the same function
    a = "%na = xor %a, -1 ; %nb = xor %b, -1 ; %r = and %na, %nb"
    b = "%o = or %a, %b ; %r = xor %o, -1"
    c = "%p = or %b, %a ; %n = xor %p, 0 ; %r = xor %n, -1"
    assert check_refinement(a, b, widths=[4]).is_valid
    assert check_refinement(b, c, widths=[4]).is_valid
    assert check_refinement(a, c, widths=[4]).is_valid


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_verdicts_match_brute_force(seed_):
    r = parse_rule(random_rule_text(random.Random(seed_)), "rand")
    v = verify_rule(r, [4], EXH)
    if v.is_unknown:
        return
    assert v.is_valid == oracle_valid(r, 4), format_rule(r)
    if v.is_counterexample:
        assert v.reproduces()
        lhs = [None if x is POISON else x for x in v.lhs_result]
        rhs = [None if x is POISON else x for x in v.rhs_result]
        assert lhs[0] is not None and lhs != rhs


FLAG_RULES = [
    "%r = add nsw nuw %x, %y\n=>\n%r = add %y, %x",
    "%r = shl nuw %x, 1\n=>\n%r = add %x, %x",
    "%r = mul nsw %x, 2\n=>\n%r = shl %x, 1",
]


@pytest.mark.parametrize("text", FLAG_RULES)
def test_flag_monotonicity(text):
    r = infer_flags(parse_rule(text, "m"), [4])
    flagged = [(i, f) for i, ins in enumerate(r.rhs) for f in ins.flags]
    for k in range(len(flagged) + 1):
        for keep in itertools.combinations(flagged, k):
            rhs = []
            for i, ins in enumerate(r.rhs):
                fl = tuple(f for f in ins.flags if (i, f) in keep)
                rhs.append(type(ins)(ins.name, ins.op, ins.operands, fl, ins.cond, ins.width))
            sub = type(r)(r.name, r.lhs, tuple(rhs), r.pre, r.replacement)
            assert verify_rule(sub, [4]).is_valid
