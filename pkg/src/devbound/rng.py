"""Deterministic random-stream derivation and trial scheduling.

Every Monte Carlo draw in the package comes from a named substream derived
from a master seed by hashing a tuple of string tags.  The derivation is a
pure function of (seed, tags), so results never depend on call order, thread
count, or how many other streams were consumed before.
"""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

_T = TypeVar("_T")

MAX_SEED = 2**64 - 1


def stream_key(*tags: object) -> int:
    """Hash a tag tuple to a 64-bit integer via blake2b.

    The textual form "a/b/c" is hashed, so tags must not be relied on to
    contain '/' themselves; all internal callers pass short identifiers.
    """
    text = "/".join(str(t) for t in tags)
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def substream(seed: int, *tags: object) -> np.random.Generator:
    """Generator for the named substream of a master seed.

    Identical (seed, tags) always yields a bit-identical stream.
    """
    if not (0 <= int(seed) <= MAX_SEED):
        raise ValueError(f"seed must be a uint64, got {seed}")
    ss = np.random.SeedSequence(entropy=[int(seed), stream_key(*tags)])
    return np.random.default_rng(ss)


def resolve_threads(threads: int | None = None) -> int:
    """Thread count from argument, DEVBOUND_THREADS, or 1."""
    if threads is None:
        env = os.environ.get("DEVBOUND_THREADS", "").strip()
        threads = int(env) if env else 1
    if threads < 1:
        raise ValueError(f"thread count must be >= 1, got {threads}")
    return threads


def map_trials(
    fn: Callable[[int], _T],
    n_trials: int,
    threads: int | None = None,
) -> list[_T]:
    """Evaluate fn(0..n_trials-1), optionally on a thread pool.

    Results are returned in trial order regardless of completion order;
    fn must draw randomness only from substreams keyed by its trial index,
    which makes the output independent of the schedule.
    """
    threads = resolve_threads(threads)
    indices: Sequence[int] = range(n_trials)
    if threads == 1 or n_trials <= 1:
        return [fn(i) for i in indices]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, indices))
