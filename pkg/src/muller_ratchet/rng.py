"""Seeded random streams.

All randomness flows through :func:`make_rng`. A stream is identified by the
user seed plus an optional tuple of integers (for instance the replicate
index); the pair is fed to :class:`numpy.random.SeedSequence` as
``entropy=seed, spawn_key=stream`` and drives a counter-based Philox
generator. Replicate ``r`` of a run seeded with ``s`` therefore always uses
``make_rng(s, r)``, independent of how many replicates exist or in which
order they execute.
"""
import numpy as np


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    if seed is None:
        raise ValueError("an explicit seed is required")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


def as_rng(rng) -> np.random.Generator:
    """Accept a Generator or an integer seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    return make_rng(rng)
