"""Deterministic RNG construction shared by every stochastic component."""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def spawn(*parts: int) -> np.random.Generator:
    """Build a Generator from one or more integer seed parts.

    Parts are masked to 64 bits so negative seeds are accepted; the same
    parts always produce the same stream.
    """
    return np.random.default_rng([int(p) & _MASK64 for p in parts])
