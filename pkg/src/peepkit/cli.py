"""Command-line entry point: ``peepkit <subcommand> ...``.

Results go to stdout, traces and diagnostics to stderr.  Exit codes:
0 success, 1 a verification failed (counterexample or unknown), 2 usage
or input error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .generalize import generalize_rule
from .ir import IRError, cost, histogram, parse_module, print_function, print_module
from .match import Matcher, rewrite_greedy_ex
from .profit import Limits, optimize_commit
from .rules import PredError, RuleError, format_rule, format_rules, load_rules
from .superopt import Cache, SynthConfig, SynthStats, cache_load, cache_store, optimize_function
from .verify import (
    DEFAULT_WIDTHS,
    BudgetExceeded,
    SignatureMismatch,
    SolverError,
    backend_from_spec,
    infer_flags,
    validate_translation,
    verify_rule,
)

log = logging.getLogger("peepkit")

EXIT_OK, EXIT_INVALID, EXIT_USAGE, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _widths(text: str) -> list[int]:
    try:
        ws = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad width list {text!r}") from None
    if not ws or any(w < 1 or w > 64 for w in ws):
        raise argparse.ArgumentTypeError(f"widths must be in 1..64: {text!r}")
    return ws


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as e:
        raise UsageError(f"{path}: {e.strerror}") from None


def _functions(paths):
    out = []
    for p in paths:
        out += parse_module(_read(p))
    return out


def _rules(path):
    _read(path)
    return load_rules(path)


def _emit(args, payload, text: str):
    if args.json:
        json.dump(payload, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
    elif text:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _pmap(fn, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(jobs) as ex:
        return list(ex.map(fn, items))


# -- subcommands -------------------------------------------------------------------


def cmd_verify(args) -> int:
    rules = _rules(args.rules)
    backend = backend_from_spec(args.backend, args.timeout)
    verdicts = _pmap(lambda r: verify_rule(r, args.widths, backend), rules, args.jobs)
    rows, lines, bad = [], [], 0
    width = max((len(r.name) for r in rules), default=0)
    for r, v in zip(rules, verdicts):
        bad += not v.is_valid
        rows.append({"rule": r.name, **v.to_dict()})
        lines.append(f"{r.name:<{width}}  {v}")
    _emit(args, {"widths": args.widths, "results": rows, "ok": bad == 0}, "\n".join(lines))
    return EXIT_INVALID if bad else EXIT_OK


def cmd_opt(args) -> int:
    m = Matcher(_rules(args.rules))
    funcs = _functions(args.ir)
    out, rows = [], []
    for f in funcs:
        before = cost(f)
        if args.mode == "greedy":
            res = rewrite_greedy_ex(m, f, args.budget)
            g, trace, status = res.function, res.trace, res.status
        else:
            g, rounds = optimize_commit(m, f, Limits(args.exhaustive_max, args.jobs))
            trace = [f"commit {', '.join(str(c) for c in r.chosen)} (cost {r.cost}, {r.regime})" for r in rounds]
            status = "fixpoint"
        for t in trace:
            print(f"@{f.name}: {t}", file=sys.stderr)
        out.append(g)
        rows.append({"function": f.name, "cost_before": before, "cost_after": cost(g),
                     "status": status, "trace": trace, "ir": print_function(g)})
    _emit(args, {"mode": args.mode, "functions": rows}, print_module(out))
    return EXIT_OK


def cmd_superopt(args) -> int:
    backend = backend_from_spec(args.backend, args.timeout)
    cache = cache_load(args.cache, backend) if args.cache else Cache()
    cfg = SynthConfig(max_cost=args.max_cost, max_holes=args.max_holes, time_limit=args.time_limit)
    out, rows = [], []
    stats = SynthStats()
    for f in _functions(args.ir):
        g, rep = optimize_function(f, cfg, cache, args.depth, backend, args.jobs, stats)
        print(f"@{f.name}: cost {rep.cost_before} -> {rep.cost_after}, {rep.hits} hits, "
              f"{rep.misses} misses, {rep.synth_calls} synthesis calls", file=sys.stderr)
        for root, why in rep.failures:
            print(f"@{f.name}: %{root}: {why}", file=sys.stderr)
        out.append(g)
        rows.append({"function": f.name, "report": rep.to_dict(), "ir": print_function(g)})
    if args.cache:
        cache_store(cache, args.cache)
    _emit(args, {"functions": rows, "cache_entries": len(cache.entries())}, print_module(out))
    return EXIT_OK


def cmd_generalize(args) -> int:
    backend = backend_from_spec(args.backend, args.timeout)
    out, rows, bad = [], [], 0
    for r in _rules(args.rules):
        try:
            g, rep, notes = generalize_rule(r, args.train_width, args.test_widths, backend)
        except BudgetExceeded as e:
            print(f"{r.name}: {e}", file=sys.stderr)
            rows.append({"rule": r.name, "error": str(e)})
            bad += 1
            continue
        for n in notes:
            print(f"{r.name}: {n}", file=sys.stderr)
        out.append(g)
        row = {"rule": r.name, "generalized": format_rule(g), "notes": notes}
        if rep is not None:
            row["report"] = rep.to_dict()
            print(f"{g.name}: pre {rep.precondition}; exact@i{rep.train_width}={rep.exact_at_train} "
                  f"sound={rep.sound_at_all_tested} weakest={rep.weakest_at_all_tested} "
                  f"verified={rep.verified}", file=sys.stderr)
            bad += not rep.verified
        rows.append(row)
    _emit(args, {"rules": rows}, format_rules(out))
    return EXIT_INVALID if bad else EXIT_OK


def cmd_tv(args) -> int:
    before, after = _functions([args.before]), _functions([args.after])
    if len(before) != len(after):
        raise UsageError(f"{len(before)} functions before, {len(after)} after")
    backend = backend_from_spec(args.backend, args.timeout)
    rows, lines, bad = [], [], 0
    for b, a in zip(before, after):
        try:
            v = validate_translation(b, a, args.widths, backend)
        except SignatureMismatch as e:
            raise UsageError(f"@{b.name}: {e}") from None
        bad += not v.is_valid
        rows.append({"function": b.name, **v.to_dict()})
        lines.append(f"@{b.name}  {v}")
    _emit(args, {"results": rows, "ok": bad == 0}, "\n".join(lines))
    return EXIT_INVALID if bad else EXIT_OK


def cmd_flags(args) -> int:
    backend = backend_from_spec(args.backend, args.timeout)
    out, rows, bad = [], [], 0
    for r in _rules(args.rules):
        try:
            g = infer_flags(r, args.widths, backend)
        except RuleError as e:
            print(str(e), file=sys.stderr)
            rows.append({"rule": r.name, "error": str(e)})
            bad += 1
            continue
        out.append(g)
        rows.append({"rule": r.name, "rule_text": format_rule(g)})
    _emit(args, {"rules": rows}, format_rules(out))
    return EXIT_INVALID if bad else EXIT_OK


def cmd_stats(args) -> int:
    funcs = _functions(args.ir)
    hist = histogram(funcs)
    costs = {f.name: cost(f) for f in funcs}
    total = sum(costs.values())
    lines = [f"{op:<8} {n}" for op, n in sorted(hist.items(), key=lambda t: (-t[1], t[0]))]
    lines += [f"@{name}: cost {c}" for name, c in costs.items()]
    lines.append(f"total cost {total} in {len(funcs)} functions")
    _emit(args, {"histogram": dict(sorted(hist.items())), "costs": costs, "total_cost": total,
                 "functions": len(funcs)}, "\n".join(lines))
    return EXIT_OK


# -- argument parsing ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable output on stdout")
    common.add_argument("--jobs", type=int, default=1, help="worker threads (default 1)")
    common.add_argument("--backend", default="exhaustive",
                        help="exhaustive (solver fallback) | exhaustive-only | solver | solver:PATH")
    common.add_argument("--timeout", type=float, default=10.0, help="solver timeout in seconds")
    common.add_argument("-v", "--verbose", action="store_true")
    widths = argparse.ArgumentParser(add_help=False)
    widths.add_argument("--widths", type=_widths, default=list(DEFAULT_WIDTHS),
                        help="comma-separated widths (default 4,8)")

    p = argparse.ArgumentParser(prog="peepkit", description="Peephole rule verification and superoptimization.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("verify", parents=[common, widths], help="verify a rules file")
    s.add_argument("rules")
    s.set_defaults(run=cmd_verify)

    s = sub.add_parser("opt", parents=[common], help="apply rules to IR functions")
    s.add_argument("--rules", required=True)
    s.add_argument("--mode", choices=("greedy", "commit"), default="greedy")
    s.add_argument("--exhaustive-max", type=int, default=12,
                   help="largest candidate count searched exhaustively in commit mode")
    s.add_argument("--budget", type=int, default=None, help="greedy rewrite budget (default 4 x size)")
    s.add_argument("ir", nargs="+")
    s.set_defaults(run=cmd_opt)

    s = sub.add_parser("superopt", parents=[common], help="superoptimize IR functions")
    s.add_argument("--cache", default=None, help="result cache file (read, then rewritten)")
    s.add_argument("--max-cost", type=int, default=2)
    s.add_argument("--max-holes", type=int, default=2)
    s.add_argument("--depth", type=int, default=5)
    s.add_argument("--time-limit", type=float, default=None, help="seconds per synthesis call")
    s.add_argument("ir", nargs="+")
    s.set_defaults(run=cmd_superopt)

    s = sub.add_parser("generalize", parents=[common], help="generalize concrete rules")
    s.add_argument("--train-width", type=int, default=4)
    s.add_argument("--test-widths", type=_widths, default=[5, 6])
    s.add_argument("rules")
    s.set_defaults(run=cmd_generalize)

    s = sub.add_parser("tv", parents=[common], help="translation validation")
    s.add_argument("--widths", type=_widths, default=None,
                   help="re-instantiate single-width functions at these widths")
    s.add_argument("before")
    s.add_argument("after")
    s.set_defaults(run=cmd_tv)

    s = sub.add_parser("flags", parents=[common, widths], help="infer nsw/nuw flags on RHS instructions")
    s.add_argument("rules")
    s.set_defaults(run=cmd_flags)

    s = sub.add_parser("stats", parents=[common], help="instruction histogram and costs")
    s.add_argument("ir", nargs="+")
    s.set_defaults(run=cmd_stats)
    return p


def main(argv=None) -> int:
    p = build_parser()
    args = p.parse_args(argv)  # exits 2 on usage errors
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.jobs < 1:
        p.error("--jobs must be >= 1")
    try:
        return args.run(args)
    except (UsageError, IRError, RuleError, PredError, ValueError) as e:
        print(f"peepkit: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SolverError as e:
        print(f"peepkit: solver error: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as e:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"peepkit: internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
