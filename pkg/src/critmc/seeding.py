"""Deterministic seed derivation.

Every random stream is keyed off one master seed.  ``derive_seed`` hashes
``(master, label, index)`` with BLAKE2b (8-byte digest, master seed as the
key) so that streams for different labels or indices are independent in
practice and stable across platforms.
"""
import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def derive_seed(master: int, label: str, index: int = 0) -> int:
    key = (int(master) & MASK64).to_bytes(8, "little")
    msg = f"{label}\x00{int(index)}".encode()
    return int.from_bytes(hashlib.blake2b(msg, key=key, digest_size=8).digest(), "little")


def make_rng(seed) -> np.random.Generator:
    """numpy Generator (PCG64) from an int seed; Generators pass through."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(int(seed) & MASK64))
