"""Counter-based normal streams: SplitMix64 seed splitting plus Box-Muller.

Replicate ``r`` of a run seeded with ``master_seed`` draws from the SplitMix64
sequence started at ``mix64(master_seed ^ r)``.  Output ``j`` of that sequence
is ``mix64(seed + (j + 1) * GOLDEN)``, so any block of the stream can be
computed without touching the ones before it, and a whole batch of replicates
is one vectorized expression.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0
_TWO_PI = 2.0 * np.pi


def _finalize(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def mix64(x: int) -> int:
    """One SplitMix64 step from state ``x``; pure-Python reference."""
    z = (x + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def replicate_seeds(master_seed: int, replicates) -> np.ndarray:
    master = np.uint64(int(master_seed) & MASK64)
    reps = np.asarray(replicates, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _finalize((master ^ reps) + np.uint64(GOLDEN))


def uint64_stream(seeds: np.ndarray, start: int, count: int) -> np.ndarray:
    """Outputs ``start .. start+count-1`` of each seed's stream, shape (len(seeds), count)."""
    seeds = np.atleast_1d(np.asarray(seeds, dtype=np.uint64))
    j = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        state = seeds[:, None] + j[None, :] * np.uint64(GOLDEN)
        return _finalize(state)


def uniforms(seeds, start: int, count: int) -> np.ndarray:
    """Doubles in [0, 1) from the top 53 bits."""
    return (uint64_stream(seeds, start, count) >> _S11).astype(np.float64) * _INV53


def normals(seeds, count: int) -> np.ndarray:
    """First ``count`` standard normals of each stream, shape (len(seeds), count).

    Pair ``k`` uses stream outputs ``2k, 2k+1`` and yields ``(r cos, r sin)``.
    """
    pairs = (count + 1) // 2
    u = uniforms(seeds, 0, 2 * pairs).reshape(-1, pairs, 2)
    radius = np.sqrt(-2.0 * np.log1p(-u[..., 0]))
    angle = _TWO_PI * u[..., 1]
    out = np.empty(u.shape[:2] + (2,))
    np.multiply(radius, np.cos(angle), out=out[..., 0])
    np.multiply(radius, np.sin(angle), out=out[..., 1])
    return out.reshape(u.shape[0], 2 * pairs)[:, :count]
