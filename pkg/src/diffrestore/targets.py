"""Target densities on the torus.

A target provides the integrand ``f`` (RGB), the unnormalized scalar density
``p >= 0`` and the score ``grad ln(p + EPS)``.  Each target also owns a
virtual ``width x height`` image: ``x[0], x[1]`` select the pixel.

Targets are immutable.  ``pack()`` flattens one into the tuple consumed by
the numba kernels; the methods on the classes are the vectorized numpy path.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._backend import default_backend, njit
from .render_kernels import trace_batch, trace_point
from .rng import TAG_BOOTSTRAP, CounterRNG
from .torus import wrap

EPS = 1e-8
FD_STEP = 1e-6

KIND_UNIFORM = 0
KIND_MIXTURE = 1
KIND_SCENE = 2

# Periodic-image terms of a wrapped Gaussian are dropped once they are below
# exp(-40) ~ 4e-18 of the nearest image (under half an ulp of the sum) or
# below exp(-700) ~ 1e-304 absolutely (keeps the arithmetic out of the slow
# subnormal range).  Both backends apply the same rule.
_REL_CUTOFF = 40.0
_EXP_CUTOFF = 700.0

_LUMA = np.array([0.2126, 0.7152, 0.0722])


def luminance(rgb):
    return np.asarray(rgb) @ _LUMA


@dataclass(frozen=True)
class TargetEvaluation:
    """One (or a batch of) evaluations of the target integrand.

    ``f`` has shape ``(..., 3)``, ``p`` and ``pixel`` shape ``(...)``.
    """

    f: np.ndarray
    p: np.ndarray
    pixel: np.ndarray


def pixel_index(x, width, height):
    """Linearized pixel index from the first two coordinates."""
    x = np.asarray(x)
    px = np.minimum((x[..., 0] * width).astype(np.int64), width - 1)
    py = np.minimum((x[..., 1] * height).astype(np.int64), height - 1)
    return py * width + px


class TargetDensity:
    """Base class; subclasses set ``kind`` and implement ``_eval``/``score``."""

    kind = -1

    def __init__(self, dim, width=32, height=32, normalization=None):
        if dim < 2 or dim % 2:
            raise ValueError(f"target dimension must be even and >= 2, got {dim}")
        if width < 1 or height < 1:
            raise ValueError("image must have at least one pixel")
        self.dim = int(dim)
        self.width = int(width)
        self.height = int(height)
        self.normalization = normalization

    @property
    def pixel_count(self):
        return self.width * self.height

    def evaluate(self, x):
        x = np.asarray(x, dtype=np.float64)
        f, p = self._eval(np.atleast_2d(x))
        pix = pixel_index(np.atleast_2d(x), self.width, self.height)
        if x.ndim == 1:
            return TargetEvaluation(f[0], p[0], pix[0])
        return TargetEvaluation(f, p, pix)

    def density(self, x):
        x = np.asarray(x, dtype=np.float64)
        p = self._eval(np.atleast_2d(x))[1]
        return p[0] if x.ndim == 1 else p

    def score(self, x):
        return fd_score(self, x)

    def log_density(self, x):
        return np.log(self.density(x) + EPS)

    def pack(self):
        raise NotImplementedError

    def _eval(self, X):
        raise NotImplementedError


def fd_score(target, x, h=FD_STEP):
    """Limited one-sided finite differences of ``ln(p + EPS)``, one axis at a time.

    Per axis the forward and backward differences are combined with
    ``minmod``: on a smooth piece both agree to ``O(h)``; across a jump (a
    silhouette or emitter edge) the side without the jump wins, which is what
    differentiating the current smooth piece would give.  Where ``p = 0`` on
    either side the score is 0.
    """
    x = np.asarray(x, dtype=np.float64)
    X = np.atleast_2d(x)
    n, d = X.shape
    shifted = np.repeat(X[:, None, :], 2 * d, axis=1)
    for i in range(d):
        shifted[:, 2 * i, i] += h
        shifted[:, 2 * i + 1, i] -= h
    lp = target.log_density(wrap(shifted.reshape(-1, d))).reshape(n, d, 2)
    l0 = target.log_density(X)[:, None]
    g = minmod((lp[:, :, 0] - l0) / h, (l0 - lp[:, :, 1]) / h)
    return g[0] if x.ndim == 1 else g


def minmod(a, b):
    """``a`` or ``b``, whichever is smaller in magnitude, or 0 if the signs differ."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.where(a * b > 0.0, np.where(np.abs(a) < np.abs(b), a, b), 0.0)


class UniformTarget(TargetDensity):
    """``p = f = 1`` everywhere."""

    kind = KIND_UNIFORM

    def __init__(self, dim=2, width=32, height=32):
        super().__init__(dim, width, height, normalization=1.0)

    def _eval(self, X):
        n = X.shape[0]
        return np.ones((n, 3)), np.ones(n)

    def score(self, x):
        return np.zeros_like(np.asarray(x, dtype=np.float64))

    def pack(self):
        return _pack(KIND_UNIFORM, np.zeros(1), self)


class WrappedGaussianMixture(TargetDensity):
    """Weighted sum of axis-aligned wrapped Gaussians on ``T^d``.

    ``p(x) = max(sum_k w_k prod_i g(x_i - mu_ki; s_ki) - clip, 0)`` where ``g``
    sums ``2K+1`` periodic images.  With ``K = 5`` the neglected images of a
    component with ``s <= 0.1`` sit at least 5 units away, i.e. below
    ``exp(-1250)`` relative.  ``f = (p, p, p)``.

    Args:
        weights: ``(k,)`` positive weights.
        means: ``(k, d)`` mode locations in ``[0, 1)``.
        stddevs: ``(k,)`` isotropic or ``(k, d)`` per-axis standard deviations.
        truncation: images per side ``K``.
        clip: subtracted floor; regions below it have ``p = 0``.
    """

    kind = KIND_MIXTURE

    def __init__(self, weights, means, stddevs, truncation=5, clip=0.0, width=32, height=32):
        weights = np.asarray(weights, dtype=np.float64).reshape(-1)
        means = np.atleast_2d(np.asarray(means, dtype=np.float64))
        k, d = means.shape
        stddevs = np.asarray(stddevs, dtype=np.float64)
        if stddevs.ndim <= 1:
            stddevs = np.broadcast_to(stddevs.reshape(-1, 1), (k, d))
        stddevs = np.array(stddevs, dtype=np.float64)
        if weights.shape != (k,) or stddevs.shape != (k, d):
            raise ValueError("weights/means/stddevs shapes disagree")
        if np.any(weights <= 0) or np.any(stddevs <= 0):
            raise ValueError("mixture weights and stddevs must be positive")
        if truncation < 0:
            raise ValueError("truncation must be >= 0")
        if clip < 0:
            raise ValueError("clip must be >= 0")
        norm = float(weights.sum()) if clip == 0.0 else None
        super().__init__(d, width, height, normalization=norm)
        self.weights = weights
        self.means = wrap(means)
        self.stddevs = stddevs
        self.truncation = int(truncation)
        self.clip = float(clip)
        params = [float(k), float(d), float(self.truncation), self.clip]
        for w, mu, sd in zip(self.weights, self.means, self.stddevs):
            params.append(w)
            params.extend(sd)
            params.extend(mu)
        self._params = np.array(params)

    def _batch(self, X, want_grad=False):
        if default_backend() == "numba":
            X = np.ascontiguousarray(X, dtype=np.float64)
            p, grad = _mixture_loop(self._params, X, want_grad)
            return (p, grad) if want_grad else p
        return _mixture_batch(self._params, X, want_grad)

    def _eval(self, X):
        p = self._batch(X)
        return np.repeat(p[:, None], 3, axis=1), p

    def gradient(self, x):
        """``grad p`` (zero where the clip is active)."""
        x = np.asarray(x, dtype=np.float64)
        grad = self._batch(np.atleast_2d(x), want_grad=True)[1]
        return grad[0] if x.ndim == 1 else grad

    def score(self, x):
        x = np.asarray(x, dtype=np.float64)
        p, grad = self._batch(np.atleast_2d(x), want_grad=True)
        s = grad / (p[:, None] + EPS)
        return s[0] if x.ndim == 1 else s

    def pack(self):
        return _pack(KIND_MIXTURE, self._params, self)


_EMPTY_PRIMS = np.zeros((0, 15))
_EMPTY_SPHERES = np.zeros((0, 10))
_EMPTY_CAM = np.zeros(12)


def _pack(kind, params, target, quads=_EMPTY_PRIMS, spheres=_EMPTY_SPHERES, cam=_EMPTY_CAM, depth=0):
    ip = np.array([target.width, target.height, depth], dtype=np.int64)
    return (kind, np.ascontiguousarray(params, dtype=np.float64), np.ascontiguousarray(quads),
            np.ascontiguousarray(spheres), np.ascontiguousarray(cam), ip, target.dim)


def estimate_normalization(target, rng, n_samples):
    """Monte Carlo estimate of ``lambda(p)`` and its standard error.

    ``rng`` is a seed or a single-stream ``CounterRNG``; ``n_samples`` uniform
    points are drawn from consecutive blocks of that stream.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if not isinstance(rng, CounterRNG):
        rng = CounterRNG.single(int(rng), tag=TAG_BOOTSTRAP)
    total = 0.0
    total_sq = 0.0
    chunk = 1 << 16
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        X = uniform_points(rng, m, target.dim)
        p = target.density(X)
        total += float(p.sum())
        total_sq += float((p * p).sum())
        done += m
    mean = total / n_samples
    var = max(total_sq / n_samples - mean * mean, 0.0)
    stderr = math.sqrt(var / max(n_samples - 1, 1)) if n_samples > 1 else float("inf")
    return mean, stderr


def uniform_points(rng, count, d):
    """``count`` points from consecutive blocks of a single stream."""
    from .rng import uniform_pair_np

    half = (d + 1) // 2
    ctr = rng.counter[0] + np.arange(count * half, dtype=np.uint64)
    u0, u1 = uniform_pair_np(rng.k0[0], rng.k1[0], rng.frame, rng.tag, ctr)
    rng.counter[0] += np.uint64(count * half)
    X = np.stack([u0, u1], axis=1).reshape(count, 2 * half)
    return X[:, :d]


# ------------------------------------------------------------- numba kernels


@njit
def _wrapped_axis(delta, s, K):
    c = 1.0 / (s * math.sqrt(2.0 * math.pi))
    g = 0.0
    dg = 0.0
    z0 = delta / s
    cut = min(0.5 * z0 * z0 + _REL_CUTOFF, _EXP_CUTOFF)
    # |delta + j| grows monotonically away from j = 0, so the kept images form
    # a contiguous range; find it, then sum in ascending j like the batch path.
    lo = 0
    while lo > -K and 0.5 * ((delta + lo - 1) / s) ** 2 <= cut:
        lo -= 1
    hi = 0
    while hi < K and 0.5 * ((delta + hi + 1) / s) ** 2 <= cut:
        hi += 1
    for j in range(lo, hi + 1):
        z = (delta + j) / s
        a = 0.5 * z * z
        if a > cut:
            continue
        e = math.exp(-a) * c
        g += e
        dg -= z / s * e
    return g, dg


@njit
def _mixture_eval(params, x, grad, want_grad):
    k = int(params[0])
    d = int(params[1])
    K = int(params[2])
    clip = params[3]
    stride = 1 + 2 * d
    g = np.empty(d)
    dg = np.empty(d)
    if want_grad:
        for i in range(d):
            grad[i] = 0.0
    total = 0.0
    for c in range(k):
        base = 4 + c * stride
        w = params[base]
        prod = w
        for i in range(d):
            delta = x[i] - params[base + 1 + d + i]
            delta = delta - math.floor(delta + 0.5)
            gi, dgi = _wrapped_axis(delta, params[base + 1 + i], K)
            g[i] = gi
            dg[i] = dgi
            prod *= gi
        total += prod
        if want_grad:
            for i in range(d):
                other = w
                for l in range(d):
                    if l != i:
                        other *= g[l]
                grad[i] += dg[i] * other
    p = total - clip
    if p <= 0.0:
        if want_grad:
            for i in range(d):
                grad[i] = 0.0
        return 0.0
    return p


@njit
def eval_point(pk, x, rgb):
    """Fill ``rgb`` with ``f(x)`` and return ``p(x)``."""
    kind = pk[0]
    if kind == KIND_UNIFORM:
        rgb[0] = 1.0
        rgb[1] = 1.0
        rgb[2] = 1.0
        return 1.0
    if kind == KIND_MIXTURE:
        p = _mixture_eval(pk[1], x, rgb, False)
        rgb[0] = p
        rgb[1] = p
        rgb[2] = p
        return p
    trace_point(pk[2], pk[3], pk[4], pk[5], x, rgb)
    return 0.2126 * rgb[0] + 0.7152 * rgb[1] + 0.0722 * rgb[2]


@njit
def _wrap_scalar(v):
    w = v - math.floor(v)
    if w >= 1.0:
        w = 0.0
    return w


@njit
def score_point(pk, x, out, work, rgb):
    """Write ``grad ln(p + EPS)`` at ``x`` into ``out``; ``work`` is a d-buffer."""
    kind = pk[0]
    d = x.shape[0]
    if kind == KIND_UNIFORM:
        for i in range(d):
            out[i] = 0.0
        return
    if kind == KIND_MIXTURE:
        p = _mixture_eval(pk[1], x, out, True)
        for i in range(d):
            out[i] = out[i] / (p + EPS)
        return
    for i in range(d):
        work[i] = x[i]
    l0 = math.log(eval_point(pk, work, rgb) + EPS)
    for i in range(d):
        work[i] = _wrap_scalar(x[i] + FD_STEP)
        lp = math.log(eval_point(pk, work, rgb) + EPS)
        work[i] = _wrap_scalar(x[i] - FD_STEP)
        lm = math.log(eval_point(pk, work, rgb) + EPS)
        work[i] = x[i]
        out[i] = _minmod1((lp - l0) / FD_STEP, (l0 - lm) / FD_STEP)


@njit
def _minmod1(a, b):
    if a * b > 0.0:
        return a if abs(a) < abs(b) else b
    return 0.0


def eval_batch(pk, X):
    """Numpy twin of ``eval_point`` on an ``(n, d)`` batch: returns ``(rgb, p)``."""
    kind = pk[0]
    n = X.shape[0]
    if kind == KIND_UNIFORM:
        return np.ones((n, 3)), np.ones(n)
    if kind == KIND_MIXTURE:
        p = _mixture_batch(pk[1], X)
        return np.repeat(p[:, None], 3, axis=1), p
    rgb = trace_batch(pk[2], pk[3], pk[4], pk[5], X)
    return rgb, rgb @ _LUMA


@njit
def _mixture_loop(params, X, want_grad):
    """Point-by-point ``_mixture_eval`` over a batch (numba path of the class methods)."""
    n, d = X.shape
    p = np.empty(n)
    grad = np.zeros((n, d)) if want_grad else np.zeros((0, d))
    g = np.empty(d)
    for i in range(n):
        p[i] = _mixture_eval(params, X[i], g, want_grad)
        if want_grad:
            for j in range(d):
                grad[i, j] = g[j]
    return p, grad


def _mixture_batch(params, X, want_grad=False):
    k, d, K = int(params[0]), int(params[1]), int(params[2])
    clip = params[3]
    stride = 1 + 2 * d
    blocks = params[4:4 + k * stride].reshape(k, stride)
    w = blocks[:, 0]
    s = blocks[:, 1:1 + d]
    mu = blocks[:, 1 + d:]
    delta = X[:, None, :] - mu[None]
    delta = delta - np.floor(delta + 0.5)
    g = np.zeros(delta.shape)
    dg = np.zeros(delta.shape)
    c = 1.0 / (s * math.sqrt(2.0 * math.pi))
    s_max = float(np.max(s)) if s.size else 0.0
    z0 = delta / s
    cut = np.minimum(0.5 * z0 * z0 + _REL_CUTOFF, _EXP_CUTOFF)
    for j in range(-K, K + 1):
        # With |delta| <= 1/2, a_j - a_0 >= (j^2 - |j|) / (2 s^2): skip images
        # that are past the cutoff for every element.
        if (j * j - abs(j)) / (2.0 * s_max * s_max) > _REL_CUTOFF:
            continue
        z = (delta + j) / s
        a = 0.5 * z * z
        e = np.where(a > cut, 0.0, np.exp(-a)) * c
        g += e
        dg -= z / s * e
    total = np.prod(g, axis=2) @ w
    p = total - clip
    active = p > 0.0
    p = np.where(active, p, 0.0)
    if not want_grad:
        return p
    grad = np.zeros(X.shape)
    for i in range(d):
        other = np.prod(np.delete(g, i, axis=2), axis=2) if d > 1 else np.ones(g.shape[:2])
        grad[:, i] = (dg[:, :, i] * other) @ w
    grad[~active] = 0.0
    return p, grad


def score_batch(pk, X):
    """Numpy twin of ``score_point``."""
    kind = pk[0]
    if kind == KIND_UNIFORM:
        return np.zeros(X.shape)
    if kind == KIND_MIXTURE:
        p, grad = _mixture_batch(pk[1], X, want_grad=True)
        return grad / (p[:, None] + EPS)
    n, d = X.shape
    out = np.empty((n, d))
    l0 = np.log(eval_batch(pk, X)[1] + EPS)
    for i in range(d):
        Y = X.copy()
        Y[:, i] = _wrap_np(X[:, i] + FD_STEP)
        lp = np.log(eval_batch(pk, Y)[1] + EPS)
        Y[:, i] = _wrap_np(X[:, i] - FD_STEP)
        lm = np.log(eval_batch(pk, Y)[1] + EPS)
        out[:, i] = minmod((lp - l0) / FD_STEP, (l0 - lm) / FD_STEP)
    return out


def _wrap_np(v):
    w = v - np.floor(v)
    return np.where(w >= 1.0, 0.0, w)
