"""Counter-based random substreams for reproducible parallel trials.

Every block of trials gets its own Philox generators, keyed by the run seed,
a stable key of the grid point and the block index. Results therefore do
not depend on how grid points or blocks are scheduled across workers.
"""

from __future__ import annotations

import hashlib

import numpy as np

STREAMS = ("channel", "symbols", "noise", "devices")


def point_key(*values) -> int:
    """Stable 63-bit key derived from the values that identify a grid point."""
    blob = repr(tuple(_canon(v) for v in values)).encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "big") >> 1


def _canon(v):
    if isinstance(v, float) and v.is_integer():
        return int(v)
    return v


def block_seeds(seed: int, key: int, block: int) -> dict[str, np.random.SeedSequence]:
    ss = np.random.SeedSequence(seed, spawn_key=(key, block))
    return dict(zip(STREAMS, ss.spawn(len(STREAMS))))


def generator(ss: np.random.SeedSequence) -> np.random.Generator:
    """Fresh Philox generator; calling twice on one seed gives identical streams."""
    return np.random.Generator(np.random.Philox(ss))
