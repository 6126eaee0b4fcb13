"""Counter-based deterministic randomness.

Every shot owns a 64-bit seed derived from the master seed by hashing a
(stream, counter) pair, so shots can be simulated in any order, in chunks,
or in parallel and still produce bit-identical trajectories.  Measurement
randomness is consumed as one uniform per measurement, which keeps the
sequential and the vectorized engines interchangeable.
"""
from __future__ import annotations

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_U64 = np.uint64
_INV_2_64 = 1.0 / 2.0 ** 64


def splitmix64(x):
    """SplitMix64 finalizer; accepts uint64 scalars or arrays, wraps mod 2^64."""
    z = (np.asarray(x).astype(np.uint64) + _GAMMA)
    z = (z ^ (z >> _U64(30))) * _M1
    z = (z ^ (z >> _U64(27))) * _M2
    return z ^ (z >> _U64(31))


def derive_seed(master_seed, stream, index=0):
    """64-bit child seed for (stream, index) under a master seed.

    ``stream`` separates independent uses (datasets, shots of one example,
    train splits ...); ``index`` is the counter within the stream.
    """
    with np.errstate(over="ignore"):
        s = splitmix64(_U64(master_seed % 2 ** 64) ^ (_U64(stream % 2 ** 64) * _M2))
        return splitmix64(s + _U64(index % 2 ** 64) * _GAMMA)


def shot_seeds(master_seed, stream, n_shots, first=0):
    """Vector of per-shot seeds for shots [first, first+n_shots)."""
    idx = np.arange(first, first + n_shots, dtype=np.uint64)
    with np.errstate(over="ignore"):
        s = splitmix64(_U64(master_seed % 2 ** 64) ^ (_U64(stream % 2 ** 64) * _M2))
        return splitmix64(s + idx * _GAMMA)


def uniforms_for_seeds(seeds, n_draws):
    """(len(seeds), n_draws) array of float64 uniforms in [0, 1).

    Draw m of seed s is splitmix64(s + (m+1)*GAMMA); purely counter based.
    """
    seeds = np.asarray(seeds, dtype=np.uint64)
    draws = (np.arange(1, n_draws + 1, dtype=np.uint64) * _GAMMA)[None, :]
    with np.errstate(over="ignore"):
        z = splitmix64(seeds[:, None] + draws)
    return z.astype(np.float64) * _INV_2_64


class RandomStream:
    """Sequential uniform stream over a single shot seed.

    Used by the one-shot reference path; consumes the same per-measurement
    uniforms as the vectorized engine so both sample identical bits.
    """

    def __init__(self, seed):
        self.seed = int(np.uint64(seed))
        self._count = 0

    def next_uniform(self):
        self._count += 1
        with np.errstate(over="ignore"):
            z = splitmix64(_U64(self.seed) + _U64(self._count) * _GAMMA)
        return float(z) * _INV_2_64


def generator(master_seed, stream, index=0):
    """numpy Generator seeded from the counter hash (dataset generation)."""
    return np.random.default_rng(int(derive_seed(master_seed, stream, index)))
