"""Counter-based random streams (Philox4x32-10).

Every chain owns a stream identified by a 64-bit key ``(index, seed)``.  The
128-bit counter is ``(n_lo, n_hi, frame, tag)`` where ``n`` is the number of
blocks already consumed, ``frame`` the initialization frame and ``tag``
separates independent purposes (chains, bootstrap, path tracing).  One
Philox block yields two 53-bit uniforms, so draws always come in pairs.

Both a scalar numba kernel and a vectorized numpy version are provided; they
produce identical bits.
"""

import math

import numpy as np

from ._backend import njit

M0 = np.uint64(0xD2511F53)
M1 = np.uint64(0xCD9E8D57)
W0 = np.uint64(0x9E3779B9)
W1 = np.uint64(0xBB67AE85)
MASK32 = np.uint64(0xFFFFFFFF)
SH32 = np.uint64(32)
SH5 = np.uint64(5)
SH6 = np.uint64(6)
TWO26 = 67108864.0
INV53 = 1.0 / 9007199254740992.0
TWO_PI = 2.0 * math.pi

TAG_CHAIN = 0
TAG_BOOTSTRAP = 1
TAG_PIXEL = 2


@njit
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Philox4x32-10 on uint64-held 32-bit words."""
    for r in range(10):
        if r > 0:
            k0 = (k0 + W0) & MASK32
            k1 = (k1 + W1) & MASK32
        p0 = M0 * c0
        p1 = M1 * c2
        hi0 = p0 >> SH32
        lo0 = p0 & MASK32
        hi1 = p1 >> SH32
        lo1 = p1 & MASK32
        c0 = hi1 ^ c1 ^ k0
        c1 = lo1
        c2 = hi0 ^ c3 ^ k1
        c3 = lo0
    return c0, c1, c2, c3


@njit
def uniform_pair(k0, k1, frame, tag, n):
    """Two uniforms in [0, 1) from block ``n`` of stream ``(k0, k1)``."""
    w0, w1, w2, w3 = philox4x32(n & MASK32, n >> SH32, frame, tag, k0, k1)
    u0 = ((w0 >> SH5) * TWO26 + (w1 >> SH6)) * INV53
    u1 = ((w2 >> SH5) * TWO26 + (w3 >> SH6)) * INV53
    return u0, u1


@njit
def normal_pair(k0, k1, frame, tag, n):
    """Two independent standard normals (Box-Muller) from one block."""
    u0, u1 = uniform_pair(k0, k1, frame, tag, n)
    r = math.sqrt(-2.0 * math.log1p(-u0))
    t = TWO_PI * u1
    return r * math.cos(t), r * math.sin(t)


def philox4x32_np(c0, c1, c2, c3, k0, k1):
    c0, c1, c2, c3, k0, k1 = (np.asarray(v, dtype=np.uint64) for v in (c0, c1, c2, c3, k0, k1))
    for r in range(10):
        if r > 0:
            k0 = (k0 + W0) & MASK32
            k1 = (k1 + W1) & MASK32
        p0 = M0 * c0
        p1 = M1 * c2
        c0, c1, c2, c3 = (p1 >> SH32) ^ c1 ^ k0, p1 & MASK32, (p0 >> SH32) ^ c3 ^ k1, p0 & MASK32
    return c0, c1, c2, c3


def uniform_pair_np(k0, k1, frame, tag, n):
    n = np.asarray(n, dtype=np.uint64)
    w0, w1, w2, w3 = philox4x32_np(n & MASK32, n >> SH32, frame, tag, k0, k1)
    u0 = ((w0 >> SH5).astype(np.float64) * TWO26 + (w1 >> SH6).astype(np.float64)) * INV53
    u1 = ((w2 >> SH5).astype(np.float64) * TWO26 + (w3 >> SH6).astype(np.float64)) * INV53
    return u0, u1


def normal_pair_np(k0, k1, frame, tag, n):
    u0, u1 = uniform_pair_np(k0, k1, frame, tag, n)
    r = np.sqrt(-2.0 * np.log1p(-u0))
    t = TWO_PI * u1
    return r * np.cos(t), r * np.sin(t)


def stream_key(index, seed):
    """Key words for stream ``index`` under ``seed`` (both reduced to 32 bits)."""
    return np.uint64(int(index) & 0xFFFFFFFF), np.uint64(int(seed) & 0xFFFFFFFF)


class CounterRNG:
    """A batch of ``n`` independent Philox streams advanced in lockstep.

    ``CounterRNG.streams(n, seed)`` gives streams ``0..n-1``; a single stream
    (``n == 1``) is what the scalar-looking public API functions take.
    Methods return arrays with a leading axis of length ``n``.
    """

    def __init__(self, indices, seed, frame=0, tag=TAG_CHAIN, counter=None):
        indices = np.atleast_1d(np.asarray(indices, dtype=np.int64))
        self.k0 = (indices & 0xFFFFFFFF).astype(np.uint64)
        self.k1 = np.full(indices.shape, int(seed) & 0xFFFFFFFF, dtype=np.uint64)
        self.frame = np.uint64(frame)
        self.tag = np.uint64(tag)
        if counter is None:
            counter = np.zeros(indices.shape, dtype=np.uint64)
        self.counter = np.asarray(counter, dtype=np.uint64).copy()
        self.seed = int(seed)

    @classmethod
    def streams(cls, n, seed, frame=0, tag=TAG_CHAIN):
        return cls(np.arange(n), seed, frame, tag)

    @classmethod
    def single(cls, seed, index=0, frame=0, tag=TAG_CHAIN):
        return cls([index], seed, frame, tag)

    def __len__(self):
        return self.k0.shape[0]

    def subset(self, mask):
        """View of the selected streams sharing nothing; write back with ``merge``."""
        sub = object.__new__(CounterRNG)
        sub.k0, sub.k1 = self.k0[mask], self.k1[mask]
        sub.frame, sub.tag, sub.seed = self.frame, self.tag, self.seed
        sub.counter = self.counter[mask].copy()
        return sub

    def merge(self, mask, sub):
        self.counter[mask] = sub.counter

    def uniform_pair(self):
        u0, u1 = uniform_pair_np(self.k0, self.k1, self.frame, self.tag, self.counter)
        self.counter += np.uint64(1)
        return u0, u1

    def normal_pair(self):
        z0, z1 = normal_pair_np(self.k0, self.k1, self.frame, self.tag, self.counter)
        self.counter += np.uint64(1)
        return z0, z1

    def uniform(self, d):
        """``(n, d)`` uniforms on [0, 1), consuming ``ceil(d / 2)`` blocks."""
        out = np.empty((len(self), d + (d & 1)))
        for i in range(0, d, 2):
            out[:, i], out[:, i + 1] = self.uniform_pair()
        return out[:, :d]

    def normal(self, d):
        out = np.empty((len(self), d + (d & 1)))
        for i in range(0, d, 2):
            out[:, i], out[:, i + 1] = self.normal_pair()
        return out[:, :d]
