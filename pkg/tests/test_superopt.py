import logging
import random
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from peepkit.ir import cost, parse_function, print_function, print_module, rescale
from peepkit.superopt import (
    Cache,
    RootError,
    SynthConfig,
    SynthStats,
    cache_load,
    cache_store,
    canonical_key,
    canonicalize,
    found_entry,
    harvest,
    none_entry,
    optimize_function,
    synthesize,
)
from peepkit.verify import validate_translation

from gen import random_function
from oracles import all_args, min_rhs_cost, ref_eval, ref_refines

DATA = Path(__file__).resolve().parents[1] / "src" / "peepkit" / "data"


def fn(name):
    return parse_function((DATA / name).read_text())


def backward_closure(f, root, depth):
    """Hand-rolled reference: names within ``depth`` hops of ``root``."""
    defs = {i.name: i for i in f.body}
    seen, frontier = {root}, [root]
    for _ in range(depth - 1):
        nxt = []
        for n in frontier:
            for o in defs[n].operands:
                if hasattr(o, "name") and o.name in defs and o.name not in seen:
                    seen.add(o.name)
                    nxt.append(o.name)
        frontier = nxt
    return seen


# -- harvesting ------------------------------------------------------------------------


def test_harvest_foo_at_d():
    foo = fn("foo.ir")
    s = harvest(foo, "d", 5)
    assert {i.name for i in s.body} == backward_closure(foo, "d", 5) == {"na", "nb", "d"}
    assert [p.name for p in s.inputs] == ["a", "b"]


def test_harvest_depth_one():
    foo = fn("foo.ir")
    s = harvest(foo, "d", 1)
    assert s.cost == 1
    assert [p.name for p in s.inputs] == ["na", "nb"]


def test_harvest_running_example():
    s = harvest(fn("lowbit8.ir"), "r", 5)
    assert s.cost == 3 and [p.name for p in s.inputs] == ["x"]


def test_harvest_errors():
    with pytest.raises(RootError):
        harvest(fn("foo.ir"), "a")
    with pytest.raises(ValueError):
        harvest(fn("foo.ir"), "d", 0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 12), st.integers(1, 6))
def test_harvest_matches_reference(seed, n, depth):
    f = random_function(random.Random(seed), n, 4)
    root = f.body[-1].name
    s = harvest(f, root, depth)
    assert {i.name for i in s.body} == backward_closure(f, root, depth)
    # the slice computes the root from the values at its frontier
    everything = f.replace(rets=tuple(f.params) + tuple(i.result for i in f.body))
    for args in list(all_args(f))[:64]:
        vals = dict(zip([v.name for v in everything.rets], ref_eval(everything, args)))
        ins_vals = [vals[p.name] for p in s.inputs]
        if any(v is None for v in ins_vals):
            continue
        assert ref_eval(s.function, ins_vals) == [vals[root]]


# -- canonical keys ------------------------------------------------------------------------


def test_key_alpha_equivalence():
    a = parse_function("func @f(%p:i8, %q:i8) {\n %t = xor i8 %p, %q\n %r = and i8 %t, %p\n ret %r\n}")
    b = parse_function("func @g(%u:i8, %v:i8) {\n %m = xor i8 %u, %v\n %n = and i8 %m, %u\n ret %n\n}")
    assert canonical_key(harvest(a, "r")) == canonical_key(harvest(b, "n"))


def test_key_commutative():
    a = parse_function("func @f(%a:i8, %b:i8) {\n %r = xor i8 %a, %b\n ret %r\n}")
    b = parse_function("func @f(%a:i8, %b:i8) {\n %r = xor i8 %b, %a\n ret %r\n}")
    assert canonical_key(harvest(a, "r")) == canonical_key(harvest(b, "r"))


def test_key_includes_width():
    s8 = harvest(fn("lowbit8.ir"), "r")
    s16 = harvest(rescale(fn("lowbit8.ir"), 16), "r")
    assert canonical_key(s8) != canonical_key(s16)


def test_canonical_form_is_equivalent():
    s = harvest(fn("mixed.ir"), "v")
    g, inv = canonicalize(s)
    assert sorted(inv.values()) == sorted(p.name for p in s.inputs)
    perm = [next(p for p in s.inputs if p.name == inv[q.name]) for q in g.params]
    reordered = s.function.replace(params=tuple(perm))
    assert validate_translation(reordered, g.replace(name=reordered.name)).is_valid


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 8), st.integers(0, 10**6))
def test_key_invariant_under_renaming(seed, n, seed2):
    f = random_function(random.Random(seed), n, 8)
    text = print_function(f)
    names = sorted({i.name for i in f.body} | {p.name for p in f.params}, key=len, reverse=True)
    fresh = list(range(len(names)))
    random.Random(seed2).shuffle(fresh)
    for old, k in zip(names, fresh):
        text = text.replace(f"%{old}", f"%__{k}")
    g = parse_function(text)
    assert canonical_key(harvest(f, f.body[-1].name)) == canonical_key(harvest(g, g.body[-1].name))


# -- synthesis -----------------------------------------------------------------------


def test_synthesize_running_example_i8():
    s = harvest(fn("lowbit8.ir"), "r")
    res = synthesize(s, SynthConfig(max_cost=2))
    assert res.found and res.cost == 2
    assert validate_translation(s.function, res.rhs.replace(name=s.function.name)).is_valid


def test_synthesize_xor_cancel():
    f = parse_function("func @f(%x:i8, %y:i8) {\n %t = xor i8 %x, %y\n %r = xor i8 %x, %t\n ret %r\n}")
    res = synthesize(harvest(f, "r"))
    assert res.found and res.cost == 0
    assert print_function(res.rhs, oneline=True).endswith("{ ret %y }")


def test_synthesize_minimal_add():
    f = parse_function("func @f(%x:i8, %y:i8) {\n %r = add i8 %x, %y\n ret %r\n}")
    res = synthesize(harvest(f, "r"), SynthConfig(max_cost=2))
    assert not res.found and res.bound == 0


def test_synthesis_stats():
    stats = SynthStats()
    synthesize(harvest(fn("lowbit8.ir"), "r"), stats=stats)
    assert stats.candidates > 0 and stats.verifications >= 1


MINIMALITY = [
    "func @f(%x:i4) {\n %s = shl i4 %x, 3\n %a = ashr i4 %s, 3\n %r = add i4 %a, 1\n ret %r\n}",
    "func @f(%a:i4, %b:i4) {\n %na = xor i4 %a, -1\n %nb = xor i4 %b, -1\n %r = and i4 %na, %nb\n ret %r\n}",
    "func @f(%x:i4) {\n %a = sub i4 0, %x\n %r = sub i4 0, %a\n ret %r\n}",
    "func @f(%x:i4) {\n %a = add i4 %x, %x\n %r = add i4 %a, %a\n ret %r\n}",
    "func @f(%x:i4, %y:i4) {\n %t = xor i4 %x, %y\n %r = or i4 %t, %x\n ret %r\n}",
    "func @f(%x:i4) {\n %a = and i4 %x, 6\n %b = or i4 %a, 9\n %r = xor i4 %b, 15\n ret %r\n}",
    "func @f(%x:i4) {\n %a = mul i4 %x, 3\n %r = sub i4 %a, %x\n ret %r\n}",
    "func @f(%x:i4) {\n %a = lshr i4 %x, 3\n %b = shl i4 %a, 3\n %r = sub i4 %x, %b\n ret %r\n}",
]


@pytest.mark.parametrize("text", MINIMALITY)
def test_synthesis_is_minimal_at_i4(text):
    f = parse_function(text)
    s = harvest(f, f.rets[0].name)
    want = min_rhs_cost(s.function, max_cost=min(2, s.cost - 1))
    res = synthesize(s, SynthConfig(max_cost=2))
    if want is None:
        assert not res.found
    else:
        assert res.found and res.cost == want
        assert ref_refines(s.function, res.rhs, all_args(s.function))


def test_no_cost_one_rhs_for_running_example_i4():
    f = parse_function(MINIMALITY[0])
    assert min_rhs_cost(f, max_cost=1) is None
    assert min_rhs_cost(f, max_cost=2) == 2


# -- optimization pass and cache ------------------------------------------------------------


def test_optimize_running_example():
    f = fn("lowbit8.ir")
    g, rep = optimize_function(f)
    assert cost(g) == cost(f) - 1
    assert rep.cost_before == 3 and rep.cost_after == 2
    assert validate_translation(f, g, [4, 8]).is_valid


def test_optimize_unimprovable():
    f = parse_function("func @f(%x:i8, %y:i8) {\n %r = add i8 %x, %y\n ret %r\n}")
    g, rep = optimize_function(f)
    assert g == f and rep.replaced == []


def test_warm_cache_identical(tmp_path):
    corpus = [fn("lowbit8.ir"), fn("mixed.ir")]
    cache = Cache()
    cold = [optimize_function(f, cache=cache)[0] for f in corpus]
    path = tmp_path / "c.cache"
    cache_store(cache, path)
    warm_cache = cache_load(path)
    stats = SynthStats()
    warm, reps = [], []
    for f in corpus:
        g, rep = optimize_function(f, cache=warm_cache, stats=stats)
        warm.append(g)
        reps.append(rep)
    assert print_module(cold) == print_module(warm)
    assert sum(r.synth_calls for r in reps) == 0 and stats.candidates == 0


def test_parallel_prefetch_same_output():
    f = fn("mixed.ir")
    a, _ = optimize_function(f, jobs=1)
    b, _ = optimize_function(f, jobs=4)
    assert a == b


def test_cache_empty_file(tmp_path):
    p = tmp_path / "empty.cache"
    p.write_text("")
    assert len(cache_load(p).entries()) == 0
    assert len(cache_load(tmp_path / "missing.cache").entries()) == 0


def _three_entries():
    slices = [harvest(fn("lowbit8.ir"), "r"), harvest(fn("mixed.ir"), "u"), harvest(fn("foo.ir"), "r")]
    out = []
    for s in slices[:2]:
        g, _ = canonicalize(s)
        res = synthesize(g)
        out.append(found_entry(canonical_key(s), res.rhs, res.cost))
    out.append(none_entry(canonical_key(slices[2]), 2))
    return out


def test_cache_round_trip(tmp_path):
    c = Cache(_three_entries())
    p = tmp_path / "c.cache"
    cache_store(c, p)
    assert cache_load(p) == c
    assert len(c.entries()) == 3


def test_cache_drops_tampered_entry(tmp_path, caplog):
    c = Cache(_three_entries())
    p = tmp_path / "c.cache"
    cache_store(c, p)
    lines = p.read_text().splitlines()
    k = next(i for i, ln in enumerate(lines) if "\tFOUND\t" in ln and "add" in ln.split("\t")[2])
    lines[k] = lines[k].replace("add i8 %x0, 1", "add i8 %x0, 2")
    lines.append("this line is garbage")
    p.write_text("\n".join(lines) + "\n")
    with caplog.at_level(logging.WARNING):
        loaded = cache_load(p)
    assert len(loaded.entries()) == 2
    assert any("re-verification" in r.message for r in caplog.records)
    assert any("corrupt" in r.message for r in caplog.records)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 6))
def test_superopt_splices_are_sound(seed, n):
    f = random_function(random.Random(seed), n, 8, n_params=1)
    g, rep = optimize_function(f, SynthConfig(max_cost=1))
    assert cost(g) <= cost(f)
    assert validate_translation(f, g, [4, 8]).is_valid
