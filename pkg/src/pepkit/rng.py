"""Seed derivation and random streams.

Every stream is a Philox-4x64 counter-based generator (``numpy.random.Philox``)
whose 128-bit key is derived from ``(master_seed, purpose)`` by SHA-256:

    key = first 16 bytes of sha256(f"{master_seed}/{purpose}") as two
          little-endian u64 words

Distinct purposes therefore never share a stream, and the same pair gives the
same draws on every platform.
"""

import hashlib

import numpy as np


def derive_seed(master_seed: int, purpose: str) -> int:
    """Return a u64 seed for ``purpose`` under ``master_seed``."""
    digest = hashlib.sha256(f"{int(master_seed)}/{purpose}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def stream(master_seed: int, purpose: str) -> np.random.Generator:
    """Return an independent Philox generator for ``(master_seed, purpose)``."""
    digest = hashlib.sha256(f"{int(master_seed)}/{purpose}".encode()).digest()
    key = np.frombuffer(digest[:16], dtype="<u8").astype(np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
