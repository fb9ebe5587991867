"""Deterministic seed derivation for nested experiment structure.

Every stochastic component takes one integer seed. Child seeds are derived
by hashing the parent seed together with a path of string tags and integer
indices, so running units of work in parallel or in a different order never
changes the random stream any unit sees.
"""

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(master: int, *path) -> int:
    """Derive a child seed from ``master`` and a path of tags/indices."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(master)).encode())
    for part in path:
        h.update(b"/")
        h.update(str(part).encode())
    return int.from_bytes(h.digest(), "big") & _MASK64


def rng_for(master: int, *path) -> np.random.Generator:
    """A fresh generator seeded from ``derive_seed(master, *path)``."""
    return np.random.default_rng(derive_seed(master, *path))
