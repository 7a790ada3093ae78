"""Seeded, splittable random streams.

Every random draw in the package flows from a single integer seed through
counter-based Philox generators.  Sub-streams are derived with spawn keys,
so a (seed, *path) pair identifies the same stream on every platform and
independently of how many other streams were created.
"""

from __future__ import annotations

import numpy as np

# Fixed stream ids so call sites cannot collide by accident.
STREAM_LABELS = 0
STREAM_EDGES = 1
STREAM_FEATURES = 2
STREAM_SPLIT = 3
STREAM_PARAMS = 4
STREAM_ORACLE = 5
STREAM_BENCH = 6


def stream(seed: int, *path: int) -> np.random.Generator:
    """Return the Philox generator for ``(seed, *path)``.

    The same arguments always yield the same stream; distinct paths yield
    statistically independent streams.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *path: int) -> int:
    """Collapse ``(seed, *path)`` into a single 63-bit child seed."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)
