"""Deterministic, splittable random number generation.

All sampling in the package goes through counter-based Philox streams keyed
by ``(seed, *stream)``.  Two consequences we rely on everywhere:

* identical ``(seed, stream)`` always reproduces identical draws, on any
  machine and regardless of how many other streams were consumed;
* independent experiment axes (seed grid points, sweep workers) can each
  derive their own stream without coordinating, so parallel and serial
  execution produce bit-identical results.
"""

from __future__ import annotations

import numpy as np


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Return a Philox generator for the given seed and sub-stream path."""
    if seed is None or int(seed) < 0:
        raise ValueError(f"seed must be a nonnegative integer, got {seed!r}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))
