import random
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from peepkit.ir import cost, parse_function, print_function
from peepkit.match import (
    Matcher,
    candidate_holds,
    compile_rules,
    match_at,
    rewrite_greedy,
    rewrite_greedy_ex,
)
from peepkit.rules import RuleError, load_rules, parse_rule, parse_rules
from peepkit.verify import validate_translation

from gen import fixed_corpus, random_function, random_rules
from oracles import naive_match_at

DATA = Path(__file__).resolve().parents[1] / "src" / "peepkit" / "data"


def fn(name):
    return parse_function((DATA / name).read_text())


def fixture_rules():
    return load_rules(DATA / "seed.rules") + load_rules(DATA / "negation.rules")


def all_candidates(m, f):
    return [c for k in range(len(f.body)) for c in m.match_at(f, k)]


def test_foo_has_two_candidates():
    m = compile_rules(load_rules(DATA / "negation.rules") + load_rules(DATA / "seed.rules")[:1])
    cands = all_candidates(m, fn("foo.ir"))
    assert [(c.rule.name, c.root) for c in cands] == [("sub-of-negs", "c"), ("add-of-negs", "d")]
    assert len(m.states) < 50


def test_empty_matcher_never_matches():
    m = compile_rules([])
    for name in ("foo.ir", "bar.ir", "mixed.ir"):
        assert all_candidates(m, fn(name)) == []


def test_duplicate_names_rejected():
    r = parse_rule("%r = add %x, 0\n=>\n%r = %x", "same")
    with pytest.raises(RuleError):
        Matcher([r, r])


def test_match_at_foo_roots():
    m = compile_rules(fixture_rules())
    foo = fn("foo.ir")
    idx = {i.name: k for k, i in enumerate(foo.body)}
    assert [c.rule.name for c in match_at(m, foo, idx["c"])] == ["sub-of-negs"]
    assert [c.rule.name for c in match_at(m, foo, idx["d"])] == ["add-of-negs"]
    assert match_at(m, foo, idx["na"]) == []


def test_greedy_foo_and_bar():
    m = compile_rules(load_rules(DATA / "negation.rules"))
    f, trace = rewrite_greedy(m, fn("foo.ir"))
    assert cost(f) == 4
    assert trace == ["fire sub-of-negs @%c", "fire add-of-negs @%d"]
    g, trace = rewrite_greedy(m, fn("bar.ir"))
    assert cost(g) == 4 and trace == ["fire add-of-negs @%d"]


def test_mutually_inverse_rules_hit_cycle_guard():
    rules = parse_rules(
        "name: swap1\n%r = add %x, 1\n=>\n%r = add 1, %x\n\n"
        "name: swap2\n%r = add 1, %x\n=>\n%r = add %x, 1\n"
    )
    # commutative matching makes each rule match its own output too
    m = compile_rules(rules)
    f = parse_function("func @f(%a:i8) {\n %r = add i8 %a, 1\n ret %r\n}")
    res = rewrite_greedy_ex(m, f, budget=50)
    assert res.status == "cycle"
    assert "cycle detected" in res.trace[-1]
    assert res.steps < 50


def test_budget_exhaustion_is_reported():
    rules = parse_rules("name: grow\n%r = add %x, 1\n=>\n%s = add %x, 0\n%r = add %s, 1\n")
    m = compile_rules(rules)
    f = parse_function("func @f(%a:i8) {\n %r = add i8 %a, 1\n ret %r\n}")
    res = rewrite_greedy_ex(m, f, budget=3)
    assert res.status in ("budget", "cycle")
    assert res.trace[-1].startswith(("budget exhausted", "cycle detected"))


def test_negative_budget_rejected():
    with pytest.raises(ValueError):
        rewrite_greedy(compile_rules([]), fn("foo.ir"), budget=-1)


def test_commutative_operands_either_order():
    m = compile_rules(load_rules(DATA / "seed.rules"))
    for text in ("%t = xor i8 %x, %y\n %r = xor i8 %x, %t",
                 "%t = xor i8 %y, %x\n %r = xor i8 %t, %x"):
        f = parse_function(f"func @f(%x:i8, %y:i8) {{\n {text}\n ret %r\n}}")
        (c,) = match_at(m, f, 1)
        assert c.rule.name == "xor-cancel"
        g, _ = rewrite_greedy(m, f)
        assert print_function(g, oneline=True) == "func @f(%x:i8, %y:i8) { ret %y }"


def test_nonlinear_requires_same_value():
    m = compile_rules(load_rules(DATA / "seed.rules"))
    f = parse_function("func @f(%x:i8, %y:i8, %z:i8) {\n %t = xor i8 %x, %y\n %r = xor i8 %z, %t\n ret %r\n}")
    assert match_at(m, f, 1) == []


def test_precondition_filters_candidates():
    m = compile_rules(load_rules(DATA / "seed.rules"))
    ok = parse_function((DATA / "lowbit8.ir").read_text())
    assert [c.rule.name for c in match_at(m, ok, 2)] == ["low-bit-flip"]
    bad = parse_function(print_function(ok).replace(" 7", " 6"))
    assert match_at(m, bad, 2) == []


def test_sublinear_lookups():
    corpus = fixed_corpus()
    assert sum(len(f.body) for f in corpus) == 200
    big = random_rules(random.Random(3), 500)

    def per_node(rules):
        m = compile_rules(rules)
        m.reset_counters()
        for f in corpus:
            all_candidates(m, f)
        return m.lookups / 200

    assert per_node(big) <= 2 * per_node(big[:50])


def test_determinism():
    m1 = compile_rules(fixture_rules())
    m2 = compile_rules(fixture_rules())
    rng = random.Random(11)
    for _ in range(30):
        f = random_function(rng, 10)
        assert rewrite_greedy(m1, f) == rewrite_greedy(m2, f)


def test_concurrent_labeling():
    rules = fixture_rules() + random_rules(random.Random(5), 100)
    m = compile_rules(rules)
    fs = [random_function(random.Random(k), 12) for k in range(40)]
    expected = [[c.key() for c in all_candidates(compile_rules(rules), f)] for f in fs]

    def job(f):
        return [c.key() for k in range(len(f.body)) for c in m.match_at(f, k)]

    with ThreadPoolExecutor(8) as ex:
        assert list(ex.map(job, fs)) == expected


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 12), st.sampled_from((4, 8)))
def test_matches_naive_matcher(seed, n, w):
    rng = random.Random(seed)
    rules = fixture_rules() + random_rules(random.Random(seed % 17), 30)
    m = compile_rules(rules)
    f = random_function(rng, n, w)
    for k in range(len(f.body)):
        got = [(c.rule.name, c.index, c.binding) for c in m.match_at(f, k)]
        assert got == naive_match_at(rules, f, k)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 12))
def test_nonlinear_bindings_are_consistent(seed, n):
    m = compile_rules(fixture_rules())
    f = random_function(random.Random(seed), n, 8)
    for c in all_candidates(m, f):
        assert candidate_holds(f, c)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 12))
def test_greedy_rewrites_validate(seed, n):
    m = compile_rules(fixture_rules())
    f = random_function(random.Random(seed), n, 8)
    g, _ = rewrite_greedy(m, f)
    assert validate_translation(f, g, [4, 8]).is_valid
