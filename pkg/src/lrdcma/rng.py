"""Seed handling.

Every random quantity is drawn from a :class:`numpy.random.Generator`
(PCG64).  Independent streams for parallel tasks are derived by spawning
keys from a master seed: the stream for task path ``(a, b, ...)`` is
``SeedSequence(master, spawn_key=(a, b, ...))``.  Derived streams depend only
on the master seed and the task path, never on scheduling.
"""

from __future__ import annotations

import numpy as np


def make_rng(seed=None) -> np.random.Generator:
    """Return a generator for ``seed`` (int, tuple, SeedSequence or Generator)."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    if isinstance(seed, tuple):
        return np.random.Generator(np.random.PCG64(derive_seed(seed[0], *seed[1:])))
    return np.random.Generator(np.random.PCG64(seed))


def derive_seed(master: int, *path: int) -> np.random.SeedSequence:
    """Seed sequence for the task identified by ``path`` under ``master``."""
    return np.random.SeedSequence(int(master), spawn_key=tuple(int(p) for p in path))
