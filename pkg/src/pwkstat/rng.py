"""Seeded substreams built on the counter-based Philox generator.

Every random quantity in the library is drawn from ``substream(seed, *path)``,
where ``path`` names the consumer (e.g. ``("band", replicate)``).  Streams with
distinct paths are statistically independent and do not depend on the order
in which they are created, so serial and parallel execution agree bit for bit.
"""
from __future__ import annotations

import zlib

import numpy as np


def _key(part: int | str) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError(f"substream keys must be nonnegative, got {part}")
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


def substream(seed: int, *path: int | str) -> np.random.Generator:
    """Return an independent generator identified by ``seed`` and ``path``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *path: int | str) -> int:
    """A 63-bit integer seed for consumers that take a plain ``int``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key(p) for p in path))
    hi, lo = ss.generate_state(2, dtype=np.uint32)
    return (int(hi) << 32 | int(lo)) >> 1
