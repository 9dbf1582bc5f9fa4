"""Persistent synthesis cache.

One entry per line, tab separated::

    KEY <TAB> FOUND <TAB> RHS_TEXT <TAB> COST
    KEY <TAB> NONE <TAB> COST_BOUND

KEY is the canonical one-line slice text and RHS_TEXT the replacement as
a one-line function over the same canonical inputs.
"""

from __future__ import annotations

import logging
import os
import tempfile
import threading
from dataclasses import dataclass

from ..ir import Function, IRError, parse_function, print_function

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CacheEntry:
    key: str
    found: bool
    rhs: str | None  # one-line function text when found
    cost: int  # RHS cost when found, else the cost bound searched

    def rhs_function(self) -> Function:
        return parse_function(self.rhs)

    def line(self) -> str:
        if self.found:
            return f"{self.key}\tFOUND\t{self.rhs}\t{self.cost}"
        return f"{self.key}\tNONE\t{self.cost}"


class Cache:
    """Key -> CacheEntry with thread-safe reads and writes."""

    def __init__(self, entries=None):
        self._d: dict[str, CacheEntry] = {}
        self._lock = threading.Lock()
        for e in entries or ():
            self._d[e.key] = e

    def get(self, key: str) -> CacheEntry | None:
        with self._lock:
            return self._d.get(key)

    def put(self, entry: CacheEntry):
        with self._lock:
            old = self._d.get(entry.key)
            # a Found entry is never downgraded, and a wider search bound wins
            if old is not None and old.found and not entry.found:
                return
            if old is not None and not old.found and not entry.found and old.cost >= entry.cost:
                return
            self._d[entry.key] = entry

    def merge(self, entries):
        for e in entries:
            self.put(e)

    def entries(self) -> list[CacheEntry]:
        with self._lock:
            return [self._d[k] for k in sorted(self._d)]

    def __len__(self):
        return len(self._d)

    def __contains__(self, key):
        return key in self._d

    def __eq__(self, other):
        return isinstance(other, Cache) and self.entries() == other.entries()

    def __repr__(self):
        return f"Cache({len(self)} entries)"


def found_entry(key: str, rhs: Function, cost: int) -> CacheEntry:
    return CacheEntry(key, True, print_function(rhs.replace(name="rhs"), oneline=True), cost)


def none_entry(key: str, bound: int) -> CacheEntry:
    return CacheEntry(key, False, None, bound)


def _parse_line(line: str) -> CacheEntry:
    parts = line.split("\t")
    if len(parts) == 4 and parts[1] == "FOUND":
        key, _, rhs, c = parts
        return CacheEntry(key, True, rhs, int(c))
    if len(parts) == 3 and parts[1] == "NONE":
        key, _, c = parts
        return CacheEntry(key, False, None, int(c))
    raise ValueError("malformed cache line")


def _reverify(e: CacheEntry, backend) -> str | None:
    """None if the entry checks out, else the reason to drop it."""
    from ..verify import validate_translation

    try:
        lhs = parse_function(e.key)
        if not e.found:
            return None
        rhs = parse_function(e.rhs)
    except IRError as exc:
        return f"unparsable: {exc}"
    if len(rhs.body) != e.cost:
        return f"recorded cost {e.cost} but the RHS has {len(rhs.body)} instructions"
    if len(rhs.body) >= len(lhs.body):
        return "RHS is not cheaper than its key"
    try:
        v = validate_translation(lhs.replace(name="rhs"), rhs, None, backend)
    except ValueError as exc:
        return str(exc)
    if not v.is_valid:
        return f"RHS fails re-verification: {v}"
    return None


def cache_load(path, backend=None, verify: bool = True) -> Cache:
    """Load a cache; bad lines and entries that fail re-verification are skipped with a warning."""
    cache = Cache()
    if not os.path.exists(path):
        return cache
    with open(path) as fh:
        for n, raw in enumerate(fh, 1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            try:
                e = _parse_line(line)
            except ValueError as exc:
                log.warning("%s:%d: skipping corrupt cache line (%s)", path, n, exc)
                continue
            reason = _reverify(e, backend) if verify else None
            if reason is not None:
                log.warning("%s:%d: dropping cache entry: %s", path, n, reason)
                continue
            cache.put(e)
    return cache


def cache_store(cache: Cache, path):
    """Write entries sorted by key, atomically replacing ``path``."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".cache-")
    with os.fdopen(fd, "w") as fh:
        for e in cache.entries():
            fh.write(e.line() + "\n")
    os.replace(tmp, path)
