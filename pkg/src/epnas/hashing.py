"""Stable hashing utilities.

Every hash in this package is seeded and platform-independent so that
identical inputs produce identical digests across runs, processes and
machines. Python's built-in ``hash`` is never used.
"""

from __future__ import annotations

import hashlib

MASK64 = (1 << 64) - 1

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3

# Published seed for canonical architecture digests. Changing it changes
# every stored arch_hash, so treat it as part of the file format.
CANONICAL_HASH_SEED = 0x9E3779B97F4A7C15

# Seed of the deterministic stub scorer shared with the reference worker.
# The worker implements the identical function, so both sides of the wire
# must agree on this constant bit for bit.
STUB_SCORE_SEED = 0x45504E415331


def fnv1a64(data: bytes, seed: int = 0) -> int:
    """Seeded 64-bit FNV-1a over ``data``."""
    h = FNV64_OFFSET ^ (seed & MASK64)
    for b in data:
        h ^= b
        h = (h * FNV64_PRIME) & MASK64
    return h


def fnv1a64_unit(data: bytes, seed: int = 0) -> float:
    """FNV-1a digest mapped to [0, 1)."""
    return fnv1a64(data, seed) / 2.0**64


def keyed_unit(key: bytes, seed: int) -> float:
    """Keyed blake2b digest of ``key`` mapped to [0, 1)."""
    d = hashlib.blake2b(key, digest_size=8, key=(seed & MASK64).to_bytes(8, "little"))
    return int.from_bytes(d.digest(), "little") / 2.0**64


def keyed_signed_unit(key: bytes, seed: int) -> float:
    """Keyed blake2b digest of ``key`` mapped to [-1, 1)."""
    return 2.0 * keyed_unit(key, seed) - 1.0
