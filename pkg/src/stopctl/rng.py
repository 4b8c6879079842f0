"""Counter-based Philox4x64-10 generator, vectorized over counters.

Each draw is a pure function of ``(key, counter)``, so a path's random
numbers do not depend on how paths are batched or scheduled.
"""

from __future__ import annotations

import numba
import numpy as np
from scipy.special import ndtri

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_LO32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
ROUNDS = 10


def _mulhilo(a: np.uint64, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a_lo, a_hi = a & _LO32, a >> _S32
    b_lo, b_hi = b & _LO32, b >> _S32
    ll = a_lo * b_lo
    lh = a_lo * b_hi
    hl = a_hi * b_lo
    hh = a_hi * b_hi
    mid = (ll >> _S32) + (lh & _LO32) + (hl & _LO32)
    hi = hh + (lh >> _S32) + (hl >> _S32) + (mid >> _S32)
    lo = (mid << _S32) | (ll & _LO32)
    return hi, lo


def philox4x64(counter, key) -> np.ndarray:
    """Encrypt counters ``(4, n)`` under keys ``(2, n)`` (or ``(2,)``); returns ``(4, n)`` uint64."""
    c0, c1, c2, c3 = (np.array(c, dtype=np.uint64, copy=True) for c in counter)
    k0, k1 = (np.array(k, dtype=np.uint64, copy=True) for k in key)
    with np.errstate(over="ignore"):
        for r in range(ROUNDS):
            if r:
                k0 = k0 + _W0
                k1 = k1 + _W1
            hi0, lo0 = _mulhilo(_M0, c0)
            hi1, lo1 = _mulhilo(_M1, c2)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return np.stack(np.broadcast_arrays(c0, c1, c2, c3))


@numba.njit(cache=True)
def _mulhilo_scalar(a, b):
    lo32 = numba.uint64(0xFFFFFFFF)
    s32 = numba.uint64(32)
    a_lo, a_hi = a & lo32, a >> s32
    b_lo, b_hi = b & lo32, b >> s32
    ll = a_lo * b_lo
    lh = a_lo * b_hi
    hl = a_hi * b_lo
    hh = a_hi * b_hi
    mid = (ll >> s32) + (lh & lo32) + (hl & lo32)
    return hh + (lh >> s32) + (hl >> s32) + (mid >> s32), (mid << s32) | (ll & lo32)


@numba.njit(cache=True)
def _philox_first_two(seed, key1, steps, out0, out1):
    m0 = numba.uint64(0xD2E7470EE14C6C93)
    m1 = numba.uint64(0xCA5A826395121157)
    w0 = numba.uint64(0x9E3779B97F4A7C15)
    w1 = numba.uint64(0xBB67AE8584CAA73B)
    zero = numba.uint64(0)
    for i in range(steps.size):
        c0, c1, c2, c3 = steps[i], zero, zero, zero
        k0, k1 = seed, key1[i]
        for r in range(10):
            if r:
                k0 += w0
                k1 += w1
            hi0, lo0 = _mulhilo_scalar(m0, c0)
            hi1, lo1 = _mulhilo_scalar(m1, c2)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        out0[i] = c0
        out1[i] = c1


def to_unit(words: np.ndarray) -> np.ndarray:
    """Map uint64 words to doubles strictly inside (0, 1).

    Midpoints of a 2^-52 grid: every value, including the extremes, is exact.
    """
    return ((words >> np.uint64(12)).astype(np.float64) + 0.5) * 2.0**-52


class PathStreams:
    """Normals and uniforms keyed by ``(seed, stream, path, step)``.

    ``stream`` separates independent experiments that share a seed.
    """

    def __init__(self, seed: int, stream: int = 0):
        if not 0 <= seed < 2**64:
            raise ValueError(f"seed must fit in 64 bits, got {seed!r}")
        if not 0 <= stream < 2**24:
            raise ValueError(f"stream must be below 2**24, got {stream!r}")
        self.seed = int(seed)
        self.stream = int(stream)

    def block(self, paths: np.ndarray, steps: np.ndarray) -> np.ndarray:
        paths = np.asarray(paths, dtype=np.uint64)
        steps = np.asarray(steps, dtype=np.uint64)
        zero = np.zeros_like(steps)
        key1 = paths | (np.uint64(self.stream) << np.uint64(40))
        return philox4x64((steps, zero, zero, zero), (np.full_like(paths, self.seed), key1))

    def draw(self, paths: np.ndarray, steps: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """One standard normal and one independent uniform per (path, step)."""
        paths = np.ascontiguousarray(paths, dtype=np.uint64)
        steps = np.ascontiguousarray(steps, dtype=np.uint64)
        key1 = paths | (np.uint64(self.stream) << np.uint64(40))
        w0 = np.empty_like(steps)
        w1 = np.empty_like(steps)
        _philox_first_two(np.uint64(self.seed), key1, steps, w0, w1)
        return ndtri(to_unit(w0)), to_unit(w1)
