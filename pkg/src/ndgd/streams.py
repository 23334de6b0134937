"""Seeded random streams.

Every stochastic operation draws from a counter-based Philox generator whose
key is derived from a master seed plus an index path, so a run or a trial gets
the same numbers regardless of execution order or worker count.
"""

import hashlib

import numpy as np


def make_rng(seed: int, *path: int) -> np.random.Generator:
    """Create the generator for ``seed`` and an optional index path."""
    sequence = np.random.SeedSequence([int(seed), *(int(p) for p in path)])
    return np.random.Generator(np.random.Philox(sequence))


def rng_digest(rng: np.random.Generator) -> str:
    """Short digest of a generator's internal state."""
    state = rng.bit_generator.state
    return hashlib.sha256(repr(state).encode("utf-8")).hexdigest()[:16]
