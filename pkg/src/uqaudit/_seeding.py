"""Stable seed derivation and the worker pool used for embarrassingly parallel fits.

Seeds are derived by hashing ``(master, tag, index)`` so that every random stream
is fixed before any work is scheduled; results never depend on execution order.
"""

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

THREADS_ENV = "UQAUDIT_THREADS"


def derive_seed(master, tag, index=0):
    """Return a 63-bit integer seed that is a pure function of its arguments."""
    payload = f"{int(master)}|{tag}|{int(index)}".encode()
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1


def rng_for(master, tag, index=0):
    return np.random.default_rng(derive_seed(master, tag, index))


def resolve_threads(threads=None):
    """Worker count: explicit argument, else ``UQAUDIT_THREADS``, else 1. Zero means auto."""
    if threads is None:
        raw = os.environ.get(THREADS_ENV, "1").strip() or "1"
        try:
            threads = int(raw)
        except ValueError:
            threads = 1
    if threads < 0:
        raise ValueError(f"thread count must be >= 0, got {threads}")
    if threads == 0:
        threads = os.cpu_count() or 1
    return threads


def parallel_map(func, items, threads=None):
    """Apply ``func`` to ``items`` and return results in input order.

    Every result lands in its pre-assigned slot, so the output is identical to
    a sequential ``[func(x) for x in items]`` whatever the worker count.
    """
    items = list(items)
    n_workers = min(resolve_threads(threads), max(len(items), 1))
    if n_workers <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(func, items))
