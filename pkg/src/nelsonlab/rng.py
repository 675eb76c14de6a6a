"""Counter-based random draws: Philox4x64-10 keyed on the seed.

Every draw is a pure function of (seed, stream, step, path), so results do
not depend on how paths are split across workers or on the order in which
blocks are generated.  One Philox block yields four 64-bit words, which is
enough for one normal vector in up to four dimensions per (path, step).
"""

from __future__ import annotations

import numpy as np
from numba import njit

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_LO = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_TWO_M53 = 1.0 / 9007199254740992.0

STREAM_INCREMENTS = 0
STREAM_INITIAL = 1
STREAM_REJECTION = 2
STREAM_BOOTSTRAP = 3


@njit(cache=True, inline="always")
def _mulhilo(a, b):
    a_lo = a & _LO
    a_hi = a >> _S32
    b_lo = b & _LO
    b_hi = b >> _S32
    ll = a_lo * b_lo
    hl = a_hi * b_lo
    lh = a_lo * b_hi
    hh = a_hi * b_hi
    cross = (ll >> _S32) + (hl & _LO) + lh
    hi = hh + (hl >> _S32) + (cross >> _S32)
    return hi, a * b


@njit(cache=True)
def philox4x64(c0, c1, c2, c3, k0, k1):
    """Ten rounds of Philox4x64 on one counter block."""
    for i in range(10):
        if i > 0:
            k0 = k0 + _W0
            k1 = k1 + _W1
        hi0, lo0 = _mulhilo(_M0, c0)
        hi1, lo1 = _mulhilo(_M1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


@njit(cache=True)
def _uniform_block(seed, stream, step, first, n, out):
    k0 = np.uint64(seed)
    k1 = np.uint64(0)
    s = np.uint64(step)
    st = np.uint64(stream)
    for i in range(n):
        w = philox4x64(s, np.uint64(first + i), st, np.uint64(0), k0, k1)
        for j in range(4):
            out[i, j] = (w[j] >> _S11) * _TWO_M53


@njit(cache=True)
def _normal_block(seed, stream, step, first, n, d, out):
    k0 = np.uint64(seed)
    k1 = np.uint64(0)
    s = np.uint64(step)
    st = np.uint64(stream)
    two_pi = 2.0 * np.pi
    for i in range(n):
        w = philox4x64(s, np.uint64(first + i), st, np.uint64(0), k0, k1)
        # Box-Muller on two pairs; the radius uses (0, 1] to avoid log(0)
        u0 = ((w[0] >> _S11) + np.uint64(1)) * _TWO_M53
        u1 = (w[1] >> _S11) * _TWO_M53
        u2 = ((w[2] >> _S11) + np.uint64(1)) * _TWO_M53
        u3 = (w[3] >> _S11) * _TWO_M53
        r0 = np.sqrt(-2.0 * np.log(u0))
        r1 = np.sqrt(-2.0 * np.log(u2))
        z0 = r0 * np.cos(two_pi * u1)
        z1 = r0 * np.sin(two_pi * u1)
        z2 = r1 * np.cos(two_pi * u3)
        z3 = r1 * np.sin(two_pi * u3)
        out[i, 0] = z0
        if d > 1:
            out[i, 1] = z1
        if d > 2:
            out[i, 2] = z2
        if d > 3:
            out[i, 3] = z3


def _check_seed(seed: int) -> np.uint64:
    seed = int(seed)
    if not 0 <= seed < 2 ** 64:
        raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
    # numba would type a plain int above 2^63 - 1 as int64 and overflow
    return np.uint64(seed)


def normals(seed: int, step: int, n_paths: int, dim: int, stream: int = STREAM_INCREMENTS, first_path: int = 0) -> np.ndarray:
    """Standard normal array of shape (n_paths, dim) for one time step."""
    if not 1 <= dim <= 4:
        raise ValueError("dim must be between 1 and 4")
    out = np.empty((n_paths, dim))
    _normal_block(_check_seed(seed), stream, step, first_path, n_paths, dim, out)
    return out


def uniforms(seed: int, step: int, n_paths: int, stream: int = STREAM_INITIAL, first_path: int = 0) -> np.ndarray:
    """Uniform [0, 1) array of shape (n_paths, 4)."""
    out = np.empty((n_paths, 4))
    _uniform_block(_check_seed(seed), stream, step, first_path, n_paths, out)
    return out


def raw_block(counter: tuple[int, int, int, int], key: tuple[int, int]) -> tuple[int, int, int, int]:
    """The four output words of one Philox block, for known-answer checks."""
    c = [np.uint64(x) for x in counter]
    k = [np.uint64(x) for x in key]
    return tuple(int(x) for x in philox4x64(*c, *k))
