"""Deterministic counter-based RNG streams.

All randomness in the toolkit flows from one 64-bit seed. Independent
substreams (per sweep point, per validation run) come from keying a
Philox counter-based generator with (seed, stream id), so parallel grid
evaluation stays reproducible without any draw-order coupling.
"""

from __future__ import annotations

import numpy as np

__all__ = ["stream"]

_MASK64 = (1 << 64) - 1


def stream(seed: int, stream_id: int = 0) -> np.random.Generator:
    """Generator for substream ``stream_id`` of ``seed``."""
    key = np.array([seed & _MASK64, stream_id & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
