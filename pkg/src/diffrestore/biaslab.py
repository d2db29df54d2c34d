"""Quadrature checks of the Euler-Maruyama bias on ``T^2``.

For the diffusion ``dX = b dt + sigma dW`` with
``b = (sigma^2 I + c A) grad ln p_hat / 2`` (``A`` block-antisymmetric,
``p_hat = p + EPS``) this module evaluates

* the continuous generator ``L phi = b . grad phi + sigma^2 / 2 lap phi``,
* the embedded-chain generator ``L_K phi = (K phi - phi) / dt`` of one
  Euler-Maruyama step ``K = N(x + dt b, dt sigma^2 I)``,
* the first-order correction ``C phi`` with
  ``(L_K - L) phi / dt = C phi + O(dt)``,
* the killing-rate defect ``(L_K^dagger p_hat) / p_hat`` on a grid.

Test functions are trigonometric polynomials with analytic derivatives.
Step parameters come from a :class:`~diffrestore.dynamics.LangevinConfig`:
``sigma = cfg.sigma``, ``c = cfg.c``, ``dt = cfg.dt``.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from .targets import EPS

TWO_PI = 2.0 * math.pi


# --------------------------------------------------------- test functions


class TrigFunction:
    """``phi(x) = sum_j a_j cos(2 pi k_j . x + theta_j)`` on ``T^2``.

    Args:
        terms: iterable of ``(k1, k2, amplitude, phase)`` with integer ``k``.
    """

    def __init__(self, terms):
        terms = np.asarray(terms, dtype=np.float64).reshape(-1, 4)
        if not np.all(terms[:, :2] == np.round(terms[:, :2])):
            raise ValueError("frequencies must be integers for periodicity")
        self.omega = TWO_PI * terms[:, :2]  # (J, 2)
        self.amp = terms[:, 2]
        self.phase = terms[:, 3]
        self.terms = terms

    @classmethod
    def constant(cls, value=1.0):
        return cls([(0, 0, value, 0.0)])

    @classmethod
    def cos1(cls, k=1):
        """``cos(2 pi k x_1)``."""
        return cls([(k, 0, 1.0, 0.0)])

    @classmethod
    def random(cls, rng, n_terms=3, max_freq=2):
        """Random trig polynomial; ``rng`` is a ``numpy.random.Generator``."""
        k = rng.integers(-max_freq, max_freq + 1, size=(n_terms, 2))
        k[np.all(k == 0, axis=1), 0] = 1
        amp = rng.uniform(0.2, 1.0, size=n_terms)
        phase = rng.uniform(0.0, TWO_PI, size=n_terms)
        return cls(np.column_stack([k, amp, phase]))

    def _arg(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return X @ self.omega.T + self.phase  # (n, J)

    def __call__(self, X):
        return np.cos(self._arg(X)) @ self.amp

    def grad(self, X):
        s = np.sin(self._arg(X)) * self.amp
        return -s @ self.omega

    def hessian(self, X):
        c = np.cos(self._arg(X)) * self.amp
        return -np.einsum("nj,ja,jb->nab", c, self.omega, self.omega)

    def laplacian(self, X):
        w2 = np.sum(self.omega ** 2, axis=1)
        return -(np.cos(self._arg(X)) * self.amp) @ w2

    def grad_laplacian(self, X):
        w2 = np.sum(self.omega ** 2, axis=1)
        return (np.sin(self._arg(X)) * (self.amp * w2)) @ self.omega

    def bilaplacian(self, X):
        w4 = np.sum(self.omega ** 2, axis=1) ** 2
        return (np.cos(self._arg(X)) * self.amp) @ w4


# ------------------------------------------------------------- generators


def _check_2d(target):
    if target.dim != 2:
        raise ValueError("the bias lab works on d = 2 targets only")


def drift(cfg, target, X):
    """``b = (sigma^2 s + c A s) / 2`` with ``s = grad ln(p + EPS)``."""
    _check_2d(target)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    s = np.atleast_2d(target.score(X))
    sigma2 = cfg.sigma ** 2
    rot = np.column_stack([s[:, 1], -s[:, 0]])
    return 0.5 * (sigma2 * s + cfg.c * rot)


def continuous_generator(cfg, target, phi, x):
    """``b . grad phi + sigma^2 / 2 lap phi`` at ``x`` (``(2,)`` or ``(n, 2)``)."""
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    b = drift(cfg, target, X)
    out = np.sum(b * phi.grad(X), axis=1) + 0.5 * cfg.sigma ** 2 * phi.laplacian(X)
    return out[0] if np.ndim(x) == 1 else out


def embedded_generator(cfg, target, phi, x, quadrature_n=128, half_width=12.0):
    """``(K phi - phi) / dt`` with ``K phi`` by tensor Gauss-Legendre quadrature.

    ``phi`` is periodic, so integrating it against the unwrapped Gaussian
    over ``mean +- half_width * sd`` equals the wrapped-kernel integral up to
    a tail below ``exp(-half_width^2 / 2)``.
    """
    if quadrature_n < 64:
        raise ValueError("quadrature_n must be >= 64")
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    dt = cfg.dt
    sd = cfg.sigma * math.sqrt(dt)
    mean = X + dt * drift(cfg, target, X)
    nodes, weights = np.polynomial.legendre.leggauss(quadrature_n)
    z = half_width * nodes  # standardized offsets
    wz = half_width * weights * np.exp(-0.5 * z * z) / math.sqrt(TWO_PI)
    W = np.outer(wz, wz).ravel()
    Z1 = np.repeat(z, quadrature_n)
    Z2 = np.tile(z, quadrature_n)
    kphi = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        Y = np.column_stack([mean[i, 0] + sd * Z1, mean[i, 1] + sd * Z2])
        kphi[i] = W @ phi(Y)
    out = (kphi - phi(X)) / dt
    return out[0] if np.ndim(x) == 1 else out


def correction_operator(cfg, target, phi, x):
    """``1/2 b^T H b + sigma^2 / 2 b . grad lap phi + sigma^4 / 8 lap^2 phi``."""
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    b = drift(cfg, target, X)
    s2 = cfg.sigma ** 2
    H = phi.hessian(X)
    out = (0.5 * np.einsum("na,nab,nb->n", b, H, b)
           + 0.5 * s2 * np.sum(b * phi.grad_laplacian(X), axis=1)
           + 0.125 * s2 * s2 * phi.bilaplacian(X))
    return out[0] if np.ndim(x) == 1 else out


# ------------------------------------------------------------ bias field


@dataclass
class GridField:
    """Values on the cell centers of an ``n x n`` grid; ``values[i, j]`` sits at
    ``x_1 = (j + 1/2) / n``, ``x_2 = (i + 1/2) / n``."""

    n: int
    values: np.ndarray
    adjoint: np.ndarray = None  # L_K^dagger p_hat, before dividing by p_hat
    density: np.ndarray = None  # p_hat

    @staticmethod
    def centers(n):
        return (np.arange(n) + 0.5) / n

    def points(self):
        c = self.centers(self.n)
        x1, x2 = np.meshgrid(c, c)
        return np.column_stack([x1.ravel(), x2.ravel()])

    def sup_norm(self):
        return float(np.max(np.abs(self.values)))

    def integral(self, which="values"):
        arr = self.values if which == "values" else getattr(self, which)
        return float(arr.sum() / self.n ** 2)

    def to_csv(self, path):
        c = self.centers(self.n)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x1", "x2", "value"])
            for i in range(self.n):
                for j in range(self.n):
                    w.writerow([repr(float(c[j])), repr(float(c[i])), repr(float(self.values[i, j]))])

    def to_png(self, path):
        """Grayscale heatmap: mid-gray is 0, white/black are +/- sup-norm; row 0 at the bottom."""
        from PIL import Image

        scale = self.sup_norm()
        v = 0.5 + (0.5 * self.values / scale if scale > 0 else 0.0 * self.values)
        img = np.clip(np.round(255.0 * v), 0, 255).astype(np.uint8)[::-1]
        Image.fromarray(img, mode="L").save(path)


def _wrapped_axis_matrix(src, shift, dst, sd):
    """``G[y, x] = sum_k N(dst[x] - src[y] - shift[y] + k; sd^2)``."""
    m = src + shift
    delta = dst[None, :] - m[:, None]
    delta -= np.floor(delta + 0.5)  # nearest image in [-1/2, 1/2)
    K = int(math.ceil(10.0 * sd)) + 1
    G = np.zeros_like(delta)
    for k in range(-K, K + 1):
        t = (delta + k) / sd
        G += np.exp(-0.5 * t * t)
    return G / (sd * math.sqrt(TWO_PI))


def adjoint_bias_field(cfg, target, grid_n, quadrature_n=None, chunk=4096):
    """``(L_K^dagger p_hat) / p_hat`` on the ``grid_n`` cell centers.

    ``(L_K^dagger p_hat)(x) = (1/dt) [ integral k(y, x) p_hat(y) dy - p_hat(x) ]``.
    The source integral uses the trapezoid rule with spacing at most
    ``sd / 1.5``, which converges spectrally once the spacing resolves the
    kernel (relative aliasing error below ``exp(-2 pi^2 1.5^2) ~ 1e-19``).

    Wide kernels use one periodic source grid of ``quadrature_n`` points per
    axis (default ``max(grid_n, 1.5 / sd)``) and a factorized matrix product.
    Narrow kernels, whose support is a small window, integrate over a
    window centered on each output point instead, so the cost does not grow
    like ``1 / dt`` per output.
    """
    _check_2d(target)
    dt = cfg.dt
    sd = cfg.sigma * math.sqrt(dt)
    field = GridField(grid_n, None)
    p_hat = (target.density(field.points()) + EPS).reshape(grid_n, grid_n)
    nq_global = max(grid_n, int(math.ceil(1.5 / sd)))
    if quadrature_n is None and nq_global > max(4 * grid_n, 512):
        acc = _local_source_integral(cfg, target, field.points(), sd).reshape(grid_n, grid_n)
    else:
        nq = nq_global if quadrature_n is None else int(quadrature_n)
        acc = _global_source_integral(cfg, target, grid_n, nq, sd, chunk)
    adj = (acc - p_hat) / dt
    field.values = adj / p_hat
    field.adjoint = adj
    field.density = p_hat
    return field


def _global_source_integral(cfg, target, grid_n, nq, sd, chunk):
    cq = GridField.centers(nq)
    y1, y2 = np.meshgrid(cq, cq)
    Y = np.column_stack([y1.ravel(), y2.ravel()])
    w = (target.density(Y) + EPS) / nq ** 2
    shift = cfg.dt * drift(cfg, target, Y)
    cx = GridField.centers(grid_n)
    acc = np.zeros((grid_n, grid_n))  # [x2, x1]
    for lo in range(0, Y.shape[0], chunk):
        sl = slice(lo, lo + chunk)
        G1 = _wrapped_axis_matrix(Y[sl, 0], shift[sl, 0], cx, sd)
        G2 = _wrapped_axis_matrix(Y[sl, 1], shift[sl, 1], cx, sd)
        acc += (G2 * w[sl, None]).T @ G1
    return acc


def _local_source_integral(cfg, target, X, sd, half_width=12.0, max_cells=1 << 22):
    """``integral k(y, x) p_hat(y) dy`` over ``|y - x| <= half_width sd + max shift``."""
    # Bound the drift displacement on a coarse grid, with a safety factor.
    probe = GridField(128, None).points()
    max_shift = 1.5 * cfg.dt * float(np.max(np.abs(drift(cfg, target, probe))))
    reach = half_width * sd + max_shift
    if reach >= 0.5:
        raise ValueError("kernel window covers the torus; use the global quadrature")
    h = sd / 1.5
    J = int(math.ceil(reach / h))
    off = h * np.arange(-J, J + 1)
    o1, o2 = np.meshgrid(off, off)
    O = np.column_stack([o1.ravel(), o2.ravel()])
    norm = h * h / (TWO_PI * sd * sd)
    out = np.empty(X.shape[0])
    step = max(1, max_cells // O.shape[0])
    for lo in range(0, X.shape[0], step):
        Xc = X[lo:lo + step]
        Y = (Xc[:, None, :] + O[None, :, :]).reshape(-1, 2)
        Y -= np.floor(Y)
        w = target.density(Y) + EPS
        m = Y + cfg.dt * drift(cfg, target, Y)
        delta = np.repeat(Xc, O.shape[0], axis=0) - m
        delta -= np.floor(delta + 0.5)
        k = np.exp(-0.5 * np.sum(delta * delta, axis=1) / (sd * sd))
        out[lo:lo + step] = (k * w).reshape(Xc.shape[0], -1).sum(axis=1) * norm
    return out


# ---------------------------------------------------------------- fitting


def fit_loglog_slope(x, y, floor=0.0):
    """Least-squares slope of ``log y`` on ``log x``; ``None`` if any ``y <= floor``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 2 or np.any(y <= floor) or not np.all(np.isfinite(y)):
        return None
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def weak_residual(cfg, target, phi, x, quadrature_n=128):
    """``sup_x |(L_K - L) phi / dt - C phi|`` over the points ``x``."""
    lk = embedded_generator(cfg, target, phi, x, quadrature_n)
    lc = continuous_generator(cfg, target, phi, x)
    cphi = correction_operator(cfg, target, phi, x)
    return float(np.max(np.abs((lk - lc) / cfg.dt - cphi)))


def implied_pixel_bias(field, p_lambda, m, dt):
    """Rough image-space bias implied by a killing-rate defect.

    A defect ``delta = kappa* - kappa`` perturbs the stationary density by about
    ``delta / kappa`` relative, with ``kappa = p_lambda / (m dt p_hat)``; the
    implied bias of a pixel value ``~ p`` is ``delta * m * dt * p_hat^2 / p_lambda``.
    Returns that array on the field's grid.
    """
    return field.values * m * dt * field.density ** 2 / p_lambda
