"""Deterministic random streams.

Algorithm (fixed so that other implementations can reproduce the streams):

* state: xoshiro256** with 256 bits of state,
* seeding: the four state words are the first four outputs of splitmix64
  started at the 64-bit seed,
* uniforms: ``(next_u64() >> 11) * 2**-53``, a 53-bit value in ``[0, 1)``,
* normals: Box-Muller using two consecutive uniforms ``u1, u2`` as
  ``sqrt(-2 log(1 - u1)) * cos(2 pi u2)``; one normal per pair,
* permutations: Fisher-Yates from the top, ``j = floor(u * (i + 1))``,
* child streams: :func:`derive_seed` mixes ``seed + GOLDEN * (stream_id + 1)``
  through the splitmix64 finaliser.

Bulk draws run in numba kernels and produce exactly the values that the same
number of scalar draws would.
"""

from __future__ import annotations

import math

import numba
import numpy as np

__all__ = ["Rng", "derive_seed", "splitmix64", "STREAM_INIT", "STREAM_NOISE", "STREAM_SHUFFLE"]

MASK64 = 0xFFFF_FFFF_FFFF_FFFF
GOLDEN = 0x9E37_79B9_7F4A_7C15

# Purpose-specific child streams of a run seed.
STREAM_INIT = 0
STREAM_NOISE = 1
STREAM_SHUFFLE = 2


def _mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58_476D_1CE4_E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D0_49BB_1331_11EB) & MASK64
    return z ^ (z >> 31)


def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step; returns ``(new_state, output)``."""
    state = (state + GOLDEN) & MASK64
    return state, _mix64(state)


def derive_seed(seed: int, stream_id: int) -> int:
    return _mix64((seed + GOLDEN * (stream_id + 1)) & MASK64)


@numba.njit(cache=True, inline="always")
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@numba.njit(cache=True, inline="always")
def _next(s):
    result = _rotl(s[1] * np.uint64(5), 7) * np.uint64(9)
    t = s[1] << np.uint64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


@numba.njit(cache=True, inline="always")
def _uniform(s):
    return np.float64(_next(s) >> np.uint64(11)) * 1.1102230246251565e-16


@numba.njit(cache=True)
def _fill_u64(s, out):
    for i in range(out.shape[0]):
        out[i] = _next(s)


@numba.njit(cache=True)
def _fill_uniform(s, out):
    for i in range(out.shape[0]):
        out[i] = _uniform(s)


@numba.njit(cache=True)
def _fill_std_normal(s, out):
    two_pi = 2.0 * math.pi
    for i in range(out.shape[0]):
        u1 = _uniform(s)
        u2 = _uniform(s)
        out[i] = math.sqrt(-2.0 * math.log(1.0 - u1)) * math.cos(two_pi * u2)


@numba.njit(cache=True)
def _fisher_yates(s, perm):
    for i in range(perm.shape[0] - 1, 0, -1):
        j = np.int64(_uniform(s) * (i + 1))
        tmp = perm[i]
        perm[i] = perm[j]
        perm[j] = tmp


class Rng:
    """A single-owner xoshiro256** stream. Not safe for concurrent mutation."""

    def __init__(self, seed: int):
        self.seed = seed & MASK64
        state = self.seed
        words = []
        for _ in range(4):
            state, out = splitmix64(state)
            words.append(out)
        self._s = np.array(words, dtype=np.uint64)

    @classmethod
    def derive(cls, seed: int, stream_id: int) -> Rng:
        return cls(derive_seed(seed & MASK64, stream_id))

    @property
    def state(self) -> tuple[int, int, int, int]:
        return tuple(int(w) for w in self._s)

    def next_u64(self) -> int:
        out = np.empty(1, dtype=np.uint64)
        _fill_u64(self._s, out)
        return int(out[0])

    def next_uniform(self) -> float:
        return float(self.uniform(1)[0])

    def next_normal(self, mean: float = 0.0, variance: float = 1.0) -> float:
        return float(self.normal(1, mean, variance)[0])

    def u64(self, size: int) -> np.ndarray:
        out = np.empty(size, dtype=np.uint64)
        _fill_u64(self._s, out)
        return out

    def uniform(self, size) -> np.ndarray:
        out = np.empty(int(np.prod(size)), dtype=np.float64)
        _fill_uniform(self._s, out)
        return out.reshape(size)

    def normal(self, size, mean: float = 0.0, variance: float = 1.0) -> np.ndarray:
        """Row-major array of N(mean, variance) draws."""
        if not variance >= 0.0:
            raise ValueError(f"variance must be non-negative, got {variance}")
        out = np.empty(int(np.prod(size)), dtype=np.float64)
        _fill_std_normal(self._s, out)
        return (mean + math.sqrt(variance) * out).reshape(size)

    def shuffle_indices(self, n: int) -> np.ndarray:
        if n < 0:
            raise ValueError(f"n must be non-negative, got {n}")
        perm = np.arange(n, dtype=np.int64)
        _fisher_yates(self._s, perm)
        return perm
