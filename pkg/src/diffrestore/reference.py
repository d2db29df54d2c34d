"""Reference images for the analytic ``d = 2`` targets.

Image values are per-pixel means of ``f`` (the integral over the pixel times
the pixel count), the same scale every estimator resolves to.

* :func:`quadrature_image` — tensor Gauss-Legendre rule with
  ``nodes_per_axis`` points per image axis in total (256 by default, i.e.
  ``256^2`` evaluations), split evenly over the pixels.
* :func:`mixture_image_exact` — closed form for axis-aligned wrapped Gaussian
  mixtures from differences of ``erf`` at the pixel edges.
* :func:`cell_masses` — normalized probability of each cell of a grid under
  ``p``; used by histogram tests.
"""

import numpy as np
from scipy.special import erf

from .targets import UniformTarget, WrappedGaussianMixture


def quadrature_image(target, nodes_per_axis=256):
    """Per-pixel mean of ``f`` by tensor Gauss-Legendre quadrature."""
    if target.dim != 2:
        raise ValueError("quadrature references need a d = 2 target")
    W, H = target.width, target.height
    if nodes_per_axis % W or nodes_per_axis % H:
        raise ValueError(f"nodes_per_axis={nodes_per_axis} must be a multiple of the image size")
    nx, ny = nodes_per_axis // W, nodes_per_axis // H
    gx, wx = np.polynomial.legendre.leggauss(nx)
    gy, wy = np.polynomial.legendre.leggauss(ny)
    # Nodes inside pixel [j, j+1) / W, weights normalized to sum to 1 per pixel.
    x = ((np.arange(W)[:, None] + 0.5 + 0.5 * gx[None, :]) / W).ravel()
    y = ((np.arange(H)[:, None] + 0.5 + 0.5 * gy[None, :]) / H).ravel()
    X1, X2 = np.meshgrid(x, y)
    f = target.evaluate(np.column_stack([X1.ravel(), X2.ravel()])).f
    f = f.reshape(H, ny, W, nx, 3)
    w = 0.25 * np.einsum("a,b->ab", wy, wx)
    return np.einsum("iajbc,ab->ijc", f, w)


def _wrapped_cdf_diff(edges, mu, sd, K):
    c = np.zeros_like(edges)
    for k in range(-K, K + 1):
        c += 0.5 * (1.0 + erf((edges - mu + k) / (np.sqrt(2.0) * sd)))
    return np.diff(c)


def mixture_masses(target, width, height):
    """``(height, width)`` grid of ``integral p`` over each cell (not normalized)."""
    if isinstance(target, UniformTarget):
        return np.full((height, width), 1.0 / (width * height))
    if not isinstance(target, WrappedGaussianMixture) or target.dim != 2:
        raise TypeError("closed-form masses need a uniform or d = 2 mixture target")
    if target.clip != 0.0:
        raise ValueError("closed-form masses need clip = 0")
    ex = np.arange(width + 1) / width
    ey = np.arange(height + 1) / height
    out = np.zeros((height, width))
    for w, mu, sd in zip(target.weights, target.means, target.stddevs):
        ax = _wrapped_cdf_diff(ex, mu[0], sd[0], target.truncation)
        ay = _wrapped_cdf_diff(ey, mu[1], sd[1], target.truncation)
        out += w * np.outer(ay, ax)
    return out


def mixture_image_exact(target):
    """Exact per-pixel means ``(H, W, 3)`` of a uniform or ``d = 2`` mixture target."""
    npix = target.width * target.height
    mean = mixture_masses(target, target.width, target.height) * npix
    return np.repeat(mean[:, :, None], 3, axis=2)


def cell_masses(target, n):
    """Probability of each cell of an ``n x n`` grid under the normalized ``p``."""
    m = mixture_masses(target, n, n)
    return m / m.sum()


def density_bound(target):
    """An upper bound on ``p`` for uniform and mixture targets."""
    if isinstance(target, UniformTarget):
        return 1.0
    if not isinstance(target, WrappedGaussianMixture):
        raise TypeError("density bound needs a uniform or mixture target")
    K = target.truncation
    peak = 0.0
    for w, sd in zip(target.weights, target.stddevs):
        # each wrapped axis factor peaks at its mode
        axes = [sum(np.exp(-0.5 * (k / s) ** 2) for k in range(-K, K + 1)) / (s * np.sqrt(2 * np.pi))
                for s in sd]
        peak += w * float(np.prod(axes))
    return peak * (1.0 + 1e-12)


def rejection_sample(target, n, rng):
    """``n`` exact draws from ``p / p_lambda`` by rejection from the uniform law.

    ``rng`` is a ``numpy.random.Generator`` (the oracle is independent of the
    engine's counter-based streams on purpose).
    """
    bound = density_bound(target)
    out = np.empty((0, target.dim))
    while out.shape[0] < n:
        m = max(2 * (n - out.shape[0]), 1024)
        X = rng.random((m, target.dim))
        keep = rng.random(m) * bound < target.density(X)
        out = np.vstack([out, X[keep]])
    return out[:n]
