"""Hierarchical seeding.

All randomness starts from one integer seed.  A component asks for a child
stream by a path of names and integers, e.g. ``substream(seed, "hom", "co", 3)``;
string parts are mapped to integers with CRC-32 and the whole path becomes the
``spawn_key`` of a :class:`numpy.random.SeedSequence`.  The same path always
gives the same stream, and distinct paths give statistically independent ones,
so work split into fixed blocks can run on any number of workers.
"""
from __future__ import annotations

import zlib

import numpy as np


def _key_part(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    if isinstance(part, (int, np.integer)) and part >= 0:
        return int(part)
    raise TypeError(f"seed path parts must be str or non-negative int, got {part!r}")


def seed_sequence(seed: int, *path) -> np.random.SeedSequence:
    if not isinstance(seed, (int, np.integer)) or seed < 0:
        raise ValueError(f"seed must be a non-negative integer, got {seed!r}")
    return np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key_part(p) for p in path))


def substream(seed: int, *path) -> np.random.Generator:
    """Independent ``Generator`` for the given seed path."""
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *path)))


def child_seed(seed: int, *path) -> int:
    """A plain integer seed drawn from the substream at ``path``."""
    return int(substream(seed, *path).integers(0, 2**63 - 1))
