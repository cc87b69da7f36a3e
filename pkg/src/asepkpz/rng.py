"""Reproducible random streams keyed by ``(seed, stream_id)``.

Each stream is a Philox4x64 counter-based generator whose 128-bit key is
the pair ``(seed, stream_id)`` and whose counter starts at zero, so the
sequence is a pure function of the pair. Parallel work splits into
substreams by index; results never depend on which worker drew them.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RandomStream:
    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not (0 <= self.seed <= _MASK64 and 0 <= self.stream_id <= _MASK64):
            raise ValueError("seed and stream_id must be unsigned 64-bit integers")

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def substream(self, index: int) -> "RandomStream":
        """Child stream ``index``; distinct indices give distinct keys."""
        mixed = np.random.SeedSequence([self.stream_id, int(index)]).generate_state(1, np.uint64)[0]
        return RandomStream(self.seed, int(mixed))


def as_generator(rng) -> np.random.Generator:
    """Accept a RandomStream, a Generator or an int seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RandomStream):
        return rng.generator()
    if isinstance(rng, (int, np.integer)):
        return RandomStream(int(rng)).generator()
    raise TypeError(f"cannot make a random generator from {type(rng).__name__}")


def as_stream(rng) -> RandomStream:
    if isinstance(rng, RandomStream):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RandomStream(int(rng))
    raise TypeError("parallel samplers need a RandomStream or an int seed")


def thread_count() -> int:
    """Worker cap from ASEP_KPZ_THREADS (default 1)."""
    raw = os.environ.get("ASEP_KPZ_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def chunk_sizes(total: int, chunk: int) -> list[int]:
    sizes = [chunk] * (total // chunk)
    if total % chunk:
        sizes.append(total % chunk)
    return sizes


def map_chunks(func, stream: RandomStream, total: int, chunk: int):
    """Run ``func(generator, size)`` over fixed-size chunks, one substream each.

    Chunk boundaries depend only on ``total`` and ``chunk``, and results come
    back in chunk order, so output is independent of the thread count.
    """
    sizes = chunk_sizes(total, chunk)
    jobs = [(stream.substream(k), n) for k, n in enumerate(sizes)]
    workers = min(thread_count(), len(jobs))
    if workers <= 1:
        return [func(s.generator(), n) for s, n in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: func(job[0].generator(), job[1]), jobs))
