import json
import subprocess
import sys
from pathlib import Path

import pytest

from peepkit import cli

DATA = Path(__file__).resolve().parents[1] / "src" / "peepkit" / "data"


def run(capsys, *argv):
    rc = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return rc, out, err


def test_verify_seed_rules(capsys):
    rc, out, _ = run(capsys, "verify", DATA / "seed.rules", "--widths", "4,8")
    assert rc == 0
    assert "Valid" in out


def test_verify_broken_rules_prints_counterexample(capsys):
    rc, out, _ = run(capsys, "verify", DATA / "broken.rules", "--widths", "4")
    assert rc == 1
    assert "Counterexample" in out and "%x=" in out


def test_verify_json(capsys):
    rc, out, err = run(capsys, "verify", "--json", DATA / "broken.rules", "--widths", "4")
    doc = json.loads(out)
    assert rc == 1 and doc["ok"] is False
    (res,) = doc["results"]
    assert res["rule"] == "low-bit-flip-unguarded"
    assert res["verdict"] == "counterexample"


def test_tv_foo(capsys):
    rc, out, _ = run(capsys, "tv", "--json", DATA / "foo.ir", DATA / "foo_opt.ir")
    assert rc == 0
    assert json.loads(out)["results"][0]["verdict"] == "valid"


def test_opt_modes(capsys):
    costs = {}
    for mode in ("greedy", "commit"):
        rc, out, err = run(capsys, "opt", "--json", "--rules", DATA / "negation.rules", "--mode", mode,
                           DATA / "foo.ir", DATA / "bar.ir")
        assert rc == 0
        doc = json.loads(out)
        costs[mode] = {f["function"]: (f["cost_before"], f["cost_after"]) for f in doc["functions"]}
    assert costs["greedy"] == {"foo": (5, 4), "bar": (3, 4)}
    assert costs["commit"] == {"foo": (5, 4), "bar": (3, 3)}


def test_opt_trace_goes_to_stderr(capsys):
    rc, out, err = run(capsys, "opt", "--rules", DATA / "negation.rules", DATA / "foo.ir")
    assert rc == 0
    assert "fire" in err and "fire" not in out
    assert "func @foo" in out


def test_stats_json(capsys):
    rc, out, _ = run(capsys, "stats", "--json", DATA / "foo.ir")
    doc = json.loads(out)
    assert rc == 0 and doc["total_cost"] == 5


def test_generalize_json(capsys):
    rc, out, _ = run(capsys, "generalize", "--json", DATA / "lowbit32.rules")
    assert rc == 0
    (r,) = json.loads(out)["rules"]
    assert r["report"]["verified"] is True


def test_unknown_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(["verify", "--no-such-flag", str(DATA / "seed.rules")])
    assert e.value.code == 2


def test_missing_file_is_usage_error(capsys):
    rc, out, err = run(capsys, "verify", DATA / "missing.rules")
    assert rc == 2 and out == "" and "error" in err


def test_internal_error_exit_code(capsys, monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("boom")

    monkeypatch.setattr(cli, "verify_rule", boom)
    rc, out, err = run(capsys, "verify", DATA / "seed.rules", "--widths", "4")
    assert rc == 3 and "internal error" in err


def test_console_script_entry():
    p = subprocess.run([sys.executable, "-m", "peepkit.cli", "verify", str(DATA / "seed.rules"),
                        "--widths", "4"], capture_output=True, text=True)
    assert p.returncode == 0, p.stderr
