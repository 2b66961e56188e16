"""Reproducible random streams for Monte-Carlo ensembles.

Every path belongs to a fixed block of ``BLOCK`` paths, and every block owns a
counter-based Philox generator keyed by ``(master_seed, stream, block)``.  The
noise of path ``i`` therefore depends only on the master seed and ``i``, never
on how an ensemble is chunked or distributed over workers.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterator, TypeVar

import numpy as np

BLOCK = 64

T = TypeVar("T")


def block_generator(seed: int, stream: int, block: int) -> np.random.Generator:
    key = np.random.SeedSequence([int(seed), int(stream), int(block)]).generate_state(2, np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def standard_normals(seed: int, n_paths: int, shape: tuple[int, ...], *,
                     stream: int = 0, path_offset: int = 0) -> np.ndarray:
    """Standard normal draws of shape ``(n_paths, *shape)`` for paths
    ``path_offset .. path_offset + n_paths - 1``."""
    if n_paths <= 0:
        return np.empty((0, *shape))
    first = path_offset // BLOCK
    last = (path_offset + n_paths - 1) // BLOCK
    parts = []
    for b in range(first, last + 1):
        parts.append(block_generator(seed, stream, b).standard_normal((BLOCK, *shape)))
    out = np.concatenate(parts, axis=0)
    start = path_offset - first * BLOCK
    return out[start:start + n_paths]


def block_rng(seed: int, stream: int = 0, path_offset: int = 0) -> np.random.Generator:
    """Generator for auxiliary (non-Gaussian) draws tied to a path block."""
    return block_generator(seed, 1000 + stream, path_offset // BLOCK)


def chunks(n_paths: int, chunk: int) -> Iterator[tuple[int, int]]:
    """Yield ``(offset, size)`` pairs covering ``n_paths``."""
    chunk = max(1, int(chunk))
    for start in range(0, n_paths, chunk):
        yield start, min(chunk, n_paths - start)


def map_chunks(fn: Callable[[int, int], T], n_paths: int, chunk: int = 4096,
               n_jobs: int = 1) -> list[T]:
    """Evaluate ``fn(offset, size)`` over path chunks, optionally on threads.

    Results are returned in chunk order, so reductions are deterministic.
    """
    work = list(chunks(n_paths, chunk))
    if n_jobs <= 1 or len(work) == 1:
        return [fn(o, s) for o, s in work]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(lambda args: fn(*args), work))
