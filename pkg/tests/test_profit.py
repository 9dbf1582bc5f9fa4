import random
from pathlib import Path

from hypothesis import given, settings
from hypothesis import strategies as st

from peepkit.ir import cost, dce, parse_function
from peepkit.match import compile_rules, rewrite_greedy
from peepkit.profit import (
    Limits,
    commit_best,
    enumerate_candidates,
    evaluate_subset,
    evaluate_subset_ex,
    optimize_commit,
)
from peepkit.rules import load_rules
from peepkit.verify import validate_translation

from gen import random_function

DATA = Path(__file__).resolve().parents[1] / "src" / "peepkit" / "data"


def fn(name):
    return parse_function((DATA / name).read_text())


def matcher():
    return compile_rules(load_rules(DATA / "seed.rules") + load_rules(DATA / "negation.rules"))


def test_candidate_counts():
    m = matcher()
    assert len(enumerate_candidates(m, fn("foo.ir"))) == 2
    assert len(enumerate_candidates(m, fn("bar.ir"))) == 1
    ident = parse_function("func @id(%x:i8) { ret %x }")
    assert enumerate_candidates(m, ident) == []


def test_evaluate_subsets_of_foo():
    foo = fn("foo.ir")
    cands = enumerate_candidates(matcher(), foo)
    assert evaluate_subset(foo, cands)[1] == 4
    only_add = [c for c in cands if c.rule.name == "add-of-negs"]
    g, c = evaluate_subset(foo, only_add)
    assert c >= 5
    assert evaluate_subset(foo, []) == (dce(foo)[0], 5)


def test_invalidated_candidates_are_skipped():
    # both candidates share the root %r after one fires
    f = parse_function(
        "func @f(%x:i8, %y:i8) {\n %t = xor i8 %x, %y\n %r = xor i8 %x, %t\n ret %r\n}"
    )
    m = matcher()
    (c,) = enumerate_candidates(m, f)
    res = evaluate_subset_ex(f, [c, c])
    assert res.cost == 0
    assert len(res.skipped) == 1


def test_commit_foo():
    foo = fn("foo.ir")
    res = commit_best(foo, enumerate_candidates(matcher(), foo))
    assert res.cost == 4 and len(res.chosen) == 2


def test_commit_bar_keeps_cost():
    bar = fn("bar.ir")
    res = commit_best(bar, enumerate_candidates(matcher(), bar))
    assert res.cost == 3 and res.chosen == []
    assert rewrite_greedy(matcher(), bar)[0].body != res.function.body


def test_commit_no_candidates():
    ident = parse_function("func @id(%x:i8) { ret %x }")
    res = commit_best(ident, [])
    assert res.function == ident and res.chosen == []


def test_greedy_regime_agrees_on_fixtures():
    m = matcher()
    for name, want in (("foo.ir", 4), ("bar.ir", 3)):
        f = fn(name)
        cands = enumerate_candidates(m, f)
        ex = commit_best(f, cands, Limits(exhaustive_max=12))
        gr = commit_best(f, cands, Limits(exhaustive_max=0))
        assert ex.regime == "exhaustive" and gr.regime == "greedy"
        assert ex.cost == gr.cost == want


def test_optimize_commit_terminates():
    m = matcher()
    f, rounds = optimize_commit(m, fn("foo.ir"))
    assert cost(f) == 4
    costs = [r.cost for r in rounds]
    assert costs == sorted(costs, reverse=True)


def test_parallel_subset_search_same_answer():
    foo = fn("foo.ir")
    cands = enumerate_candidates(matcher(), foo)
    a = commit_best(foo, cands, Limits(jobs=1))
    b = commit_best(foo, cands, Limits(jobs=4))
    assert (a.cost, [c.key() for c in a.chosen]) == (b.cost, [c.key() for c in b.chosen])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 12), st.integers(0, 12))
def test_never_worse_and_sound(seed, n, exhaustive_max):
    f = random_function(random.Random(seed), n, 8)
    m = matcher()
    res = commit_best(f, enumerate_candidates(m, f), Limits(exhaustive_max=exhaustive_max))
    assert res.cost <= cost(f)
    assert validate_translation(f, res.function, [4, 8]).is_valid
    g, _ = optimize_commit(m, f)
    assert cost(g) <= cost(f)
