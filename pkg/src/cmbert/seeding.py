"""Sub-seed derivation.

Every random stream in a run is derived from the single config seed with a
splitmix64 mix over a sequence of keys, so streams can be recreated from
``(seed, *keys)`` alone (for example the masking stream of a given step).
"""
import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _key_to_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key) & _MASK64
    digest = hashlib.sha256(str(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derive_seed(seed: int, *keys) -> int:
    """Fold ``keys`` into ``seed`` one splitmix64 round per key."""
    state = splitmix64(int(seed) & _MASK64)
    for key in keys:
        state = splitmix64(state ^ _key_to_int(key))
    return state


def rng_for(seed: int, *keys) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *keys))
