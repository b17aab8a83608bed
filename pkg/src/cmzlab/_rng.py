"""Deterministic seed derivation.

All stochastic kernels in the package consume explicit 64-bit seeds.  Worker
(shard) seeds are derived from a master seed with splitmix64 so that results
for a fixed (seed, shard-count) pair are bit-identical regardless of how the
shards are scheduled.
"""

from __future__ import annotations

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(z: np.uint64) -> np.uint64:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def derive_seeds(master_seed: int, n: int) -> np.ndarray:
    """n worker seeds derived from master_seed, as uint64.

    Worker i receives the i-th output of the splitmix64 stream started at the
    master seed, so the mapping does not depend on n.
    """
    out = np.empty(n, dtype=np.uint64)
    with np.errstate(over="ignore"):
        state = np.uint64(master_seed)
        for i in range(n):
            state = state + _GAMMA
            out[i] = _mix(state)
    return out


def rng_from(seed: int, *stream: int) -> np.random.Generator:
    """NumPy Generator seeded from (seed, stream...) via SeedSequence."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, stream)]))
