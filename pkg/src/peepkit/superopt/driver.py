"""The superoptimization pass: harvest each root, consult the cache, synthesize, splice."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from ..ir import Const, Function, Instruction, Var, cost, dce, depth_map, print_function
from ..ir.core import substitute
from .cache import Cache, found_entry, none_entry
from .slice import canonicalize, harvest
from .synth import SynthConfig, SynthStats, synthesize


@dataclass
class Report:
    roots_tried: list = field(default_factory=list)
    hits: int = 0
    misses: int = 0
    synth_calls: int = 0
    replaced: list = field(default_factory=list)  # (root, slice cost, rhs cost)
    failures: list = field(default_factory=list)  # (root, reason)
    seconds: float = 0.0
    cost_before: int = 0
    cost_after: int = 0

    def to_dict(self):
        return {
            "roots_tried": list(self.roots_tried),
            "hits": self.hits,
            "misses": self.misses,
            "synth_calls": self.synth_calls,
            "replaced": [{"root": r, "slice_cost": a, "rhs_cost": b} for r, a, b in self.replaced],
            "failures": [{"root": r, "reason": m} for r, m in self.failures],
            "seconds": round(self.seconds, 3),
            "cost_before": self.cost_before,
            "cost_after": self.cost_after,
        }


def root_order(f: Function) -> list[str]:
    """Deepest roots first; ties in body order."""
    d = depth_map(f)
    return [i.name for _, i in sorted(enumerate(f.body), key=lambda t: (-d[t[1].name], t[0]))]


def splice(f: Function, root: str, rhs: Function, inputs: dict[str, str]) -> Function:
    """Replace ``root`` by ``rhs`` (whose parameter names map to ``inputs``)."""
    env: dict = {p.name: Var(inputs[p.name], f.widths[inputs[p.name]]) for p in rhs.params}
    taken = set(f.widths)
    new = []
    last = rhs.body[-1].name if rhs.body else None
    ret = rhs.rets[0]
    for ins in rhs.body:
        if ins.name == last and isinstance(ret, Var) and ret.name == last:
            name = root
        else:
            k = 0
            while f"{root}.{k}" in taken:
                k += 1
            name = f"{root}.{k}"
        taken.add(name)
        ops = tuple(o if isinstance(o, Const) else env[o.name] for o in ins.operands)
        c = Instruction(name, ins.op, ins.width, ops, ins.flags, ins.cond)
        env[ins.name] = c.result
        new.append(c)
    body = list(f.body)
    k = f.index[root]
    if new and new[-1].name == root:
        body[k:k + 1] = new
        return f.replace(body=tuple(body))
    rep = ret if isinstance(ret, Const) else env[ret.name]
    body[k:k + 1] = new
    sub = {root: rep}
    body = [substitute(i, sub) for i in body]
    rets = tuple(rep if isinstance(o, Var) and o.name == root else o for o in f.rets)
    return f.replace(body=tuple(body), rets=rets)


def _lookup(cache: Cache, key: str, bound: int):
    e = cache.get(key)
    if e is None:
        return None
    if e.found or e.cost >= bound:
        return e
    return None


def _solve(g: Function, key: str, bound: int, cfg: SynthConfig, backend, stats):
    res = synthesize(g, cfg, backend, stats)
    if res.found:
        return found_entry(key, res.rhs, res.cost), res
    return none_entry(key, bound), res


def optimize_function(f: Function, cfg: SynthConfig | None = None, cache: Cache | None = None,
                      depth: int = 5, backend=None, jobs: int = 1, stats: SynthStats | None = None):
    """Superoptimize every root of ``f``; returns ``(function, report)``.

    A splice is kept only when it lowers the cost of the whole function
    (after dead-code elimination).
    """
    cfg = cfg or SynthConfig()
    cache = cache if cache is not None else Cache()
    stats = stats if stats is not None else SynthStats()
    if backend is None:
        from ..verify import default_backend

        backend = default_backend()
    t0 = time.monotonic()
    rep = Report(cost_before=cost(f))

    def prepare(g_f, root):
        s = harvest(g_f, root, depth)
        g, inv = canonicalize(s)
        key = print_function(g, oneline=True)
        return s, g, inv, key, min(cfg.max_cost, s.cost - 1)

    if jobs > 1:
        # synthesize the misses of the initial roots in parallel, merge once
        todo = {}
        for root in root_order(f):
            s, g, inv, key, bound = prepare(f, root)
            if _lookup(cache, key, bound) is None and key not in todo:
                todo[key] = (g, bound)
        with ThreadPoolExecutor(jobs) as ex:
            results = list(ex.map(lambda kv: _solve(kv[1][0], kv[0], kv[1][1], cfg, backend, SynthStats()),
                                  todo.items()))
        rep.synth_calls += len(results)
        rep.misses += len(results)
        cache.merge(e for e, _ in results)
        prefetched = set(todo)
    else:
        prefetched = set()

    for root in root_order(f):
        if root not in f.index:
            continue
        rep.roots_tried.append(root)
        s, g, inv, key, bound = prepare(f, root)
        e = _lookup(cache, key, bound)
        if e is None:
            rep.misses += 1
            rep.synth_calls += 1
            e, res = _solve(g, key, bound, cfg, backend, stats)
            cache.put(e)
            if not res.found and res.warnings:
                rep.failures.append((root, "; ".join(res.warnings)))
        elif key not in prefetched:
            rep.hits += 1
        if not e.found or e.cost >= s.cost:
            continue
        new, _ = dce(splice(f, root, e.rhs_function(), inv))
        if cost(new) < cost(f):
            rep.replaced.append((root, s.cost, e.cost))
            f = new
    rep.cost_after = cost(f)
    rep.seconds = time.monotonic() - t0
    return f, rep
