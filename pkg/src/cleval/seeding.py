"""Deterministic seed derivation.

All randomness in the harness flows from a single base seed through
``derive_seed(base, tag, *indices)``: a pure 64-bit mixing chain. There is
no global RNG anywhere; every component builds its own ``numpy`` generator
from a derived seed. Distinct domain tags ("order", "eval-order",
"tuning-sample", ...) keep the random streams of different subsystems
independent even when they share indices.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    # Finalizer from the splitmix64 generator; full-period 64-bit mixing.
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return (x ^ (x >> 31)) & _MASK


def _fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h = ((h ^ b) * 0x100000001B3) & _MASK
    return h


def derive_seed(base: int, tag: str, *indices: int) -> int:
    """Mix ``base``, a domain ``tag`` and integer indices into a u64 seed."""
    h = _splitmix64(base & _MASK)
    h = _splitmix64(h ^ _fnv1a64(tag.encode("utf-8")))
    for idx in indices:
        h = _splitmix64(h ^ (idx & _MASK))
    return h


def rng_from(seed: int) -> np.random.Generator:
    """A fresh PCG64 generator for a derived seed."""
    return np.random.Generator(np.random.PCG64(seed & _MASK))
