"""Seed derivation.

Every random draw in tubekit comes from a generator built by :func:`rng`
from a 64-bit seed.  Independent streams are derived from one parent seed
with :func:`split`, so a whole dataset is reproducible from a single integer
and the per-item seeds do not depend on evaluation order.

``split(seed, label)`` is the first 8 bytes (little-endian) of
``blake2b(b"tubekit" + seed.to_bytes(8, "little") + label.encode())``.
Labels may be nested: ``split(split(s, "pair"), "patch-0")``.
"""
from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def split(seed: int, label: str | int) -> int:
    h = hashlib.blake2b(digest_size=8)
    h.update(b"tubekit")
    h.update((int(seed) & MASK64).to_bytes(8, "little"))
    h.update(str(label).encode("utf-8"))
    return int.from_bytes(h.digest(), "little")


def rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) & MASK64))
