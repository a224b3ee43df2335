"""Counter-based random numbers: every draw is a pure function of
``(seed, a, b, stream)`` so generators need no hidden state and can be
evaluated in any order."""

import numpy as np
from numba import njit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0

STREAM_INJECT = 0
STREAM_DEST = 1
STREAM_BACKOFF = 2


@njit(cache=True)
def mix64(x):
    x = (x ^ (x >> _S30)) * _M1
    x = (x ^ (x >> _S27)) * _M2
    return x ^ (x >> _S31)


@njit(cache=True)
def hash4(seed, a, b, stream):
    h = mix64(np.uint64(seed) + GOLDEN)
    h = mix64(h ^ (np.uint64(a) + GOLDEN))
    h = mix64(h ^ (np.uint64(b) + GOLDEN))
    h = mix64(h ^ (np.uint64(stream) + GOLDEN))
    return h


@njit(cache=True)
def uniform(seed, a, b, stream):
    """Float in [0, 1)."""
    return float(hash4(seed, a, b, stream) >> _S11) * _INV53


@njit(cache=True)
def randint(seed, a, b, stream, lo, hi):
    """Integer uniform on ``[lo, hi]`` inclusive."""
    return lo + int(uniform(seed, a, b, stream) * (hi - lo + 1))
