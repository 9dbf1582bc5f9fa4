"""Speculative application of candidate sets, committing only global wins.

Cost is instruction count after dead-code elimination.  A subset of
candidates is applied in ascending root order; a candidate whose binding
no longer holds (an earlier member rewrote one of its instructions) is
skipped and recorded rather than re-matched.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .ir import Function, cost, dce
from .match import Candidate, Matcher, apply_candidate, candidate_holds


@dataclass
class Limits:
    exhaustive_max: int = 12
    jobs: int = 1


def enumerate_candidates(m: Matcher, f: Function) -> list[Candidate]:
    out, seen = [], set()
    for idx in range(len(f.body)):
        for c in m.match_at(f, idx):
            if c.key() not in seen:
                seen.add(c.key())
                out.append(c)
    return out


@dataclass
class SubsetResult:
    function: Function
    cost: int
    applied: list = field(default_factory=list)
    skipped: list = field(default_factory=list)


def evaluate_subset_ex(f: Function, subset) -> SubsetResult:
    g = f
    applied, skipped = [], []
    for c in sorted(subset, key=lambda c: (c.index, c.rule.name)):
        idx = g.index.get(c.root)
        moved = Candidate(c.rule, idx, c.root, c.binding) if idx is not None else c
        if idx is None or not candidate_holds(g, moved):
            skipped.append(c)
            continue
        g = apply_candidate(g, moved)
        applied.append(c)
    g, _ = dce(g)
    return SubsetResult(g, cost(g), applied, skipped)


def evaluate_subset(f: Function, subset) -> tuple[Function, int]:
    r = evaluate_subset_ex(f, subset)
    return r.function, r.cost


@dataclass
class CommitResult:
    function: Function
    chosen: list
    cost: int
    explored: int = 0
    regime: str = "exhaustive"
    skipped: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.function, self.chosen))


def _subsets(n: int):
    for k in range(n + 1):
        yield from itertools.combinations(range(n), k)


def _map(fn, items, jobs):
    if jobs <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(jobs) as ex:
        return list(ex.map(fn, items))


def commit_best(f: Function, candidates, limits: Limits | None = None) -> CommitResult:
    """Best-cost subset of ``candidates``; never worse than doing nothing.

    Exhaustive over all subsets when there are at most
    ``limits.exhaustive_max`` candidates, otherwise greedy add-one (keeping
    the best subset seen along the way).  Ties
    go to fewer candidates, then the lexicographically first subset.
    """
    limits = limits or Limits()
    cands = list(candidates)
    n = len(cands)
    base = SubsetResult(f, cost(f))
    if n == 0:
        return CommitResult(f, [], cost(f), 0)
    if n <= limits.exhaustive_max:
        subs = list(_subsets(n))
        results = _map(lambda s: evaluate_subset_ex(f, [cands[i] for i in s]), subs, limits.jobs)
        best_key, best = None, None
        for s, r in zip(subs, results):
            key = (r.cost, len(s), s)
            if best_key is None or key < best_key:
                best_key, best = key, (s, r)
        s, r = best
        if r.cost > base.cost:
            return CommitResult(f, [], base.cost, len(subs))
        return CommitResult(r.function, [cands[i] for i in s], r.cost, len(subs), "exhaustive", r.skipped)
    # greedy: add the candidate giving the lowest cost; cost-neutral steps are
    # allowed (pairs like foo's only pay off together), worsening ones stop it
    chosen: list[int] = []
    cur = evaluate_subset_ex(f, [])
    best, best_chosen = (cur, []) if cur.cost <= base.cost else (base, [])
    explored = 1
    while len(chosen) < n:
        rest = [i for i in range(n) if i not in chosen]
        trials = _map(lambda i: evaluate_subset_ex(f, [cands[j] for j in chosen + [i]]), rest, limits.jobs)
        explored += len(trials)
        i, r = min(zip(rest, trials), key=lambda t: (t[1].cost, t[0]))
        if r.cost > cur.cost:
            break
        chosen.append(i)
        cur = r
        if r.cost < best.cost:
            best, best_chosen = r, sorted(chosen)
    return CommitResult(best.function, [cands[i] for i in best_chosen], best.cost, explored, "greedy",
                        best.skipped)


def optimize_commit(m: Matcher, f: Function, limits: Limits | None = None):
    """Re-match and commit until no subset lowers the cost.

    Returns ``(function, rounds)`` where each round is a CommitResult.
    Terminates because every accepted round strictly lowers the cost.
    """
    rounds = []
    while True:
        res = commit_best(f, enumerate_candidates(m, f), limits)
        if res.cost >= cost(f) or not res.chosen:
            if res.cost < cost(f):
                f = res.function
            break
        rounds.append(res)
        f = res.function
    return f, rounds


__all__ = [
    "CommitResult", "Limits", "SubsetResult", "commit_best", "enumerate_candidates",
    "evaluate_subset", "evaluate_subset_ex", "optimize_commit",
]
