"""Named, splittable random streams.

Every random draw in a run comes from a generator keyed by
``(master seed, stream name, *integer keys)``. Streams are counter-based
(Philox) and independent, so consuming one never shifts another and a run
can be resumed from any iteration without saving generator state.
"""

from __future__ import annotations

import zlib

import numpy as np

STREAMS = ("prompt", "mutation", "selection", "train", "eval", "cascade", "retrain")


def _name_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def seed_sequence(master: int, name: str, *keys: int) -> np.random.SeedSequence:
    spawn_key = (_name_key(name),) + tuple(int(k) for k in keys)
    return np.random.SeedSequence(entropy=int(master), spawn_key=spawn_key)


def stream(master: int, name: str, *keys: int) -> np.random.Generator:
    """Return the generator for ``(master, name, *keys)``."""
    return np.random.Generator(np.random.Philox(seed_sequence(master, name, *keys)))


def draw_seeds(rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw ``n`` episode seeds as non-negative 63-bit integers."""
    return rng.integers(0, 2**63 - 1, size=n, dtype=np.int64)
