"""Keyed counter-based random draws.

Every stochastic decision in a run is a pure function of a key: the run seed,
a draw-site constant, and up to four integer words naming the decision (day,
location, visit pair, person, ...). No generator state is carried between
draws, so results cannot depend on thread scheduling, partitioning or the
order in which locations and people are processed.

The mixer is the SplitMix64 finalizer applied once per key word. Two
implementations are kept: ``keyed_uniform`` (numba, scalar, used inside the
compiled kernels and callable from Python) and ``keyed_uniform_array``
(plain numpy, vectorised). They must agree bit for bit; the test-suite checks
this.

Key schedule (site, w1, w2, w3, w4):

===============  =====  ===========================================
site             const  words
===============  =====  ===========================================
CONTACT          1      day, location index, low visit id, high visit id
INFECTION        2      day, person index
TRANSITION       3      day, person index
DWELL            4      day, person index
SEEDING          5      day, draw number
SUPPRESSION      6      activation day, crc32(intervention name), visit id
===============  =====  ===========================================

Unused words are zero.
"""

from __future__ import annotations

import numba as nb
import numpy as np

CONTACT = 1
INFECTION = 2
TRANSITION = 3
DWELL = 4
SEEDING = 5
SUPPRESSION = 6

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


@nb.njit(nb.uint64(nb.uint64), cache=True, nogil=True)
def _mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@nb.njit(cache=True, nogil=True)
def keyed_hash(seed, site, w1, w2, w3, w4):
    h = _mix(np.uint64(seed) ^ _GOLDEN)
    h = _mix(h ^ (np.uint64(site) + _GOLDEN))
    h = _mix(h ^ (np.uint64(w1) + _GOLDEN))
    h = _mix(h ^ (np.uint64(w2) + _GOLDEN))
    h = _mix(h ^ (np.uint64(w3) + _GOLDEN))
    h = _mix(h ^ (np.uint64(w4) + _GOLDEN))
    return h


@nb.njit(cache=True, nogil=True)
def keyed_uniform(seed, site, w1, w2, w3, w4):
    """Uniform double in [0, 1) determined entirely by the key."""
    return float(keyed_hash(seed, site, w1, w2, w3, w4) >> _S11) * _INV53


def _mix_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def _as_u64(x, n: int) -> np.ndarray:
    a = np.asarray(x)
    if a.dtype.kind == "i":
        if np.any(a < 0):
            raise ValueError("key words must be non-negative")
    a = a.astype(np.uint64)
    return np.broadcast_to(a, (n,)) if a.ndim == 0 else a


def keyed_uniform_array(seed: int, site: int, w1=0, w2=0, w3=0, w4=0) -> np.ndarray:
    """Vectorised ``keyed_uniform``; any word may be an array (broadcast)."""
    n = int(np.broadcast(np.asarray(w1), np.asarray(w2), np.asarray(w3), np.asarray(w4)).size)
    words = [_as_u64(w, n) for w in (w1, w2, w3, w4)]
    h = _mix_array(np.full(n, as_seed(seed) ^ _GOLDEN, dtype=np.uint64))
    h = _mix_array(h ^ (np.uint64(site) + _GOLDEN))
    for w in words:
        h = _mix_array(h ^ (w + _GOLDEN))
    return (h >> _S11).astype(np.float64) * _INV53


def as_seed(seed: int) -> np.uint64:
    """Reduce any integer seed to the 64-bit key word used by the draws."""
    return np.uint64(int(seed) % (1 << 64))


class KeyedStream:
    """A fixed key prefix (seed, site, leading words) for convenient draws.

    ``KeyedStream(seed, CONTACT, day, loc).uniform(lo, hi)`` draws the contact
    Bernoulli uniform for a visit pair.
    """

    def __init__(self, seed: int, site: int, *prefix: int):
        if len(prefix) > 4:
            raise ValueError("at most four key words")
        self.seed = as_seed(seed)
        self.site = int(site)
        self.prefix = tuple(int(p) for p in prefix)

    def _words(self, rest):
        words = self.prefix + tuple(rest)
        if len(words) > 4:
            raise ValueError("at most four key words")
        return words + (0,) * (4 - len(words))

    def uniform(self, *rest: int) -> float:
        return keyed_uniform(self.seed, self.site, *self._words(rest))

    def uniform_array(self, *rest) -> np.ndarray:
        return keyed_uniform_array(self.seed, self.site, *self._words(rest))
