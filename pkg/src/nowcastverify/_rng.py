"""Counter-based randomness helpers.

Every stochastic decision in this package (crop acceptance, random crop
offsets, rank tie-breaking, noise members, permutation sign flips) is keyed
by integers rather than drawn from a shared sequential stream.  That makes
results independent of scan order and worker count: the decision for a
candidate depends only on (seed, identifying integers), never on how many
draws happened before it.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MULT1 = np.uint64(0xBF58476D1CE4E5B9)
_MULT2 = np.uint64(0x94D049BB133111EB)

_TWO64 = 1 << 64
_INV_2_53 = 1.0 / (1 << 53)


def splitmix64(z):
    """SplitMix64 output function: uint64 -> uint64 with strong diffusion.

    Accepts a Python int, numpy integer, or ndarray of uint64; returns a 0-d
    or n-d uint64 array.  Matches the reference sequence: splitmix64(0) ==
    0xE220A8397B1DCDAF.
    """
    with np.errstate(over="ignore"):  # wraparound is the point
        z = np.asarray(z, dtype=np.uint64) + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MULT1
        z = (z ^ (z >> np.uint64(27))) * _MULT2
        return z ^ (z >> np.uint64(31))


def mix_key(*parts: int) -> int:
    """Fold integers into one 64-bit key.  Order sensitive; negatives allowed."""
    k = np.uint64(17)
    for p in parts:
        k = splitmix64(k ^ np.uint64(int(p) % _TWO64))
    return int(k)


def uniform_from_bits(bits) -> np.ndarray:
    """Map uint64 bit patterns to float64 uniforms in [0, 1)."""
    return (np.asarray(bits, dtype=np.uint64) >> np.uint64(11)) * _INV_2_53


def cell_uniforms(base_key: int, n: int) -> np.ndarray:
    """Deterministic per-cell uniforms for cells 0..n-1 under ``base_key``."""
    idx = np.arange(n, dtype=np.uint64)
    return uniform_from_bits(splitmix64(np.uint64(base_key % _TWO64) ^ idx))


def keyed_generator(*parts: int) -> np.random.Generator:
    """A Philox generator whose full state is determined by ``parts``."""
    k0 = mix_key(*parts)
    k1 = mix_key(k0, *parts)
    return np.random.Generator(np.random.Philox(key=k0 | (k1 << 64)))
