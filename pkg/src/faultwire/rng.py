"""Reproducible random streams.

Every random draw in an experiment comes from a stream derived from one
64-bit run seed. Substream seeds are derived with SplitMix64 so that the
streams are independent of each other and stable across platforms and
Python versions (random.Random guarantees a stable random() sequence for
a given integer seed).
"""

from __future__ import annotations

import random

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One SplitMix64 step: maps a 64-bit value to a well-mixed 64-bit value."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, *tags: int) -> int:
    """Derive an independent substream seed from `seed` and integer tags.

    Same (seed, tags) always yields the same value; distinct tag tuples
    yield unrelated values.
    """
    z = splitmix64(seed & _MASK64)
    for tag in tags:
        z = splitmix64(z ^ splitmix64(tag & _MASK64))
    return z


def make_stream(seed: int, *tags: int) -> random.Random:
    """A random.Random seeded with derive_seed(seed, *tags)."""
    return random.Random(derive_seed(seed, *tags))
