"""Counter-based random streams.

Every stochastic routine in the package draws from a Philox generator keyed
by (seed, *lane).  Distinct lanes give statistically independent streams, so
paths, particles and experiments can be generated in any order or batch
layout without changing each other's draws.
"""

from __future__ import annotations

import numpy as np


def stream(seed: int, *lane: int) -> np.random.Generator:
    """Return the Philox generator for stream (seed, *lane).

    Lane components must be non-negative integers (path index, replica
    index, ...).  The same (seed, lane) always yields the same sequence.
    """
    key = tuple(int(k) for k in lane)
    if any(k < 0 for k in key):
        raise ValueError("lane components must be non-negative")
    ss = np.random.SeedSequence(int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


def path_noise(seed: int, path: int, n_steps: int, width: int = 1) -> np.ndarray:
    """Pre-draw the standard-normal increments for one path.

    Returns shape (n_steps,) when width == 1, else (n_steps, width).
    """
    g = stream(seed, path)
    if width == 1:
        return g.standard_normal(n_steps)
    return g.standard_normal((n_steps, width))
