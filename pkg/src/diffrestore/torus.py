"""The flat torus ``[0, 1)^d`` with ``d`` even.

Coordinates are float64 throughout.  Points are plain numpy arrays of shape
``(d,)`` or ``(n, d)``.
"""

import math

import numpy as np

from ._backend import njit

_BELOW_ONE = np.nextafter(1.0, 0.0)


class InvalidStateError(ValueError):
    """A non-finite coordinate reached the torus arithmetic."""


def wrap(v):
    """Map ``v`` onto ``[0, 1)`` componentwise (``v - floor(v)``).

    Inputs a hair below an integer round to exactly 1.0 in float64; those are
    sent to 0.0, their nearest point on the torus.
    """
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise InvalidStateError("non-finite coordinate in torus point")
    out = v - np.floor(v)
    out[out >= 1.0] = 0.0
    return out


def is_valid_point(x, d=None):
    x = np.asarray(x)
    if d is not None and x.shape[-1] != d:
        return False
    return bool(x.shape[-1] % 2 == 0 and np.all(x >= 0.0) and np.all(x < 1.0))


def sample_uniform(rng, d):
    """``len(rng)`` i.i.d. uniform points on ``T^d``; shape ``(d,)`` for one stream."""
    if d < 2 or d % 2:
        raise ValueError(f"torus dimension must be even and >= 2, got {d}")
    x = rng.uniform(d)
    return x[0] if len(rng) == 1 else x


def toroidal_delta(a, b):
    """Minimal-image displacement from ``a`` to ``b``, each component in [-0.5, 0.5).

    The antipodal tie resolves to -0.5.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")
    t = b - a + 0.5
    t = t - np.floor(t)
    t[t >= 1.0] = 0.0
    return t - 0.5


@njit
def wrap1(v):
    w = v - math.floor(v)
    if w >= 1.0:
        w = 0.0
    return w


@njit
def delta1(a, b):
    t = b - a + 0.5
    t = t - math.floor(t)
    if t >= 1.0:
        t = 0.0
    return t - 0.5
