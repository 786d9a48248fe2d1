"""Replication fan-out with per-replication random streams.

Stream ``(seed, *key)`` is ``SeedSequence(seed, spawn_key=key)``, so results
do not depend on how replications are chunked or how many workers run them.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence

import numpy as np


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get("SYMQ_THREADS", "1") or 1)
    return max(1, int(threads))


def chunks(n: int, size: int) -> list[tuple[int, int]]:
    return [(lo, min(n, lo + size)) for lo in range(0, n, size)]


def pmap(fn: Callable, args: Sequence[tuple], threads: int = 1) -> list:
    """Ordered map; runs in a process pool when ``threads > 1``."""
    if threads <= 1 or len(args) <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        futs = [ex.submit(fn, *a) for a in args]
        return [f.result() for f in futs]
