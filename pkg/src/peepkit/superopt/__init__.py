from .cache import Cache, CacheEntry, cache_load, cache_store, found_entry, none_entry
from .driver import Report, optimize_function, root_order, splice
from .slice import RootError, Slice, canonical_key, canonicalize, harvest
from .synth import Found, NotFound, SynthConfig, SynthStats, literal_pool, seed_vectors, synthesize

__all__ = [
    "Cache", "CacheEntry", "cache_load", "cache_store", "found_entry", "none_entry", "Report",
    "optimize_function", "root_order", "splice", "RootError", "Slice", "canonical_key",
    "canonicalize", "harvest", "Found", "NotFound", "SynthConfig", "SynthStats", "literal_pool",
    "seed_vectors", "synthesize",
]
