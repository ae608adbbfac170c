"""Deterministic seeded randomness.

Two layers:

* ``make_rng`` / ``derive_seed`` give independent numpy generators for
  operations that draw sequentially (sampling, synthesis).
* The ``mix64`` / ``hash_id`` / ``uniform_from`` family gives counter-style
  draws keyed by stable identifiers, so a value attached to (seed, image,
  class, tag) is the same no matter when or in what order it is computed.
  The simulated detector is built on these: its behaviour is a pure function
  of state, not of call order.
"""

from __future__ import annotations

import hashlib

import numpy as np

U64 = np.uint64
_MASK = (1 << 64) - 1

# splitmix64 constants
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def derive_seed(*parts: object) -> int:
    """Stable 64-bit seed from arbitrary parts (ints, strings)."""
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        h.update(repr(p).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "big")


def make_rng(*parts: object) -> np.random.Generator:
    """Independent generator for the given seed parts."""
    return np.random.Generator(np.random.PCG64(derive_seed(*parts)))


def hash_id(identifier: str) -> int:
    """Stable 64-bit hash of a string id (process-independent)."""
    return int.from_bytes(
        hashlib.blake2b(identifier.encode("utf-8"), digest_size=8).digest(), "big"
    )


def mix64(keys: np.ndarray) -> np.ndarray:
    """Vectorized splitmix64 finalizer over uint64 keys."""
    with np.errstate(over="ignore"):
        z = (keys + U64(_GOLDEN)).astype(U64)
        z = (z ^ (z >> U64(30))) * U64(_MIX1)
        z = (z ^ (z >> U64(27))) * U64(_MIX2)
        z = z ^ (z >> U64(31))
    return z


def combine(base: np.ndarray | int, *salts: int) -> np.ndarray:
    """Fold integer salts into a key array (or scalar) one mix round each."""
    keys = np.asarray(base, dtype=U64)
    for salt in salts:
        keys = mix64(keys ^ U64(salt & _MASK))
    return keys


def uniform_from(keys: np.ndarray) -> np.ndarray:
    """Map uint64 keys to float64 uniforms in [0, 1)."""
    return (mix64(keys) >> U64(11)).astype(np.float64) * (2.0**-53)


def normal_from(keys: np.ndarray) -> np.ndarray:
    """Map uint64 keys to standard normal draws (Box-Muller)."""
    u1 = uniform_from(combine(keys, 0x5BF03635))
    u2 = uniform_from(combine(keys, 0xC2B2AE35))
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)
