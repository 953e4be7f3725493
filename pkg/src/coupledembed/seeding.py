"""Deterministic RNG forking: one root seed, fixed labels per consumer.

All randomness in a run flows from a single integer seed; each module
derives its own stream from (seed, label) so adding a consumer never
shifts another one's draws.
"""

from __future__ import annotations

import zlib

import numpy as np


def seed_for(seed: int, label: str) -> int:
    """Stable derived seed for a named consumer."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(label.encode("utf-8"))])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def rng_for(seed: int, label: str) -> np.random.Generator:
    return np.random.default_rng(seed_for(seed, label))
