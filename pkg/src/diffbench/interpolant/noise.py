"""Counter-based Gaussian noise.

Every sample is a pure function of (seed, chain, step, coordinate): a
splitmix64 cascade produces 64 random bits, which Box-Muller turns into one
normal draw. Chains can therefore be generated in any order or batch split
and still receive the same numbers.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _absorb(state: np.ndarray, value) -> np.ndarray:
    return _mix(state + _GOLDEN + np.asarray(value, dtype=np.uint64) * _GOLDEN)


def chain_normals(seed: int, chains: np.ndarray, step: int, dim: int) -> np.ndarray:
    """Standard normals of shape (len(chains), dim), float64."""
    with np.errstate(over="ignore"):
        chains = np.asarray(chains, dtype=np.uint64)
        state = _absorb(np.full(chains.shape, np.uint64(seed & 0xFFFFFFFFFFFFFFFF)), np.uint64(0))
        state = _absorb(state, chains)
        state = _absorb(state, np.uint64(step))
        coords = np.arange(dim, dtype=np.uint64)
        bits = _absorb(state[:, None], coords[None, :])
    hi = (bits >> np.uint64(32)).astype(np.float64)
    lo = (bits & np.uint64(0xFFFFFFFF)).astype(np.float64)
    u1 = (hi + 0.5) / 4294967296.0
    u2 = lo / 4294967296.0
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
