"""Local dynamics: nonreversible unadjusted Langevin, Metropolis and MALA.

The public step functions are vectorized: ``x`` is ``(d,)`` with a
single-stream ``CounterRNG`` or ``(n, d)`` with ``n`` streams.  The numba
``*_point`` kernels are the per-chain versions used inside the engine; both
consume the same draws in the same order:

* Langevin: ``d/2`` normal pairs, one per 2-block.
* Metropolis / MALA: one uniform pair ``(u_large, u_accept)``, then ``d/2``
  pairs that are uniform (large step) or normal (small step).
"""

import math
from dataclasses import dataclass

import numpy as np

from ._backend import njit
from .rng import normal_pair, uniform_pair
from .targets import EPS, TargetEvaluation, pixel_index
from .torus import delta1, toroidal_delta, wrap, wrap1

ONE = np.uint64(1)


@dataclass(frozen=True)
class LangevinConfig:
    """Euler-Maruyama step of the nonreversible Langevin diffusion.

    ``stddev = sqrt(dt) * sigma`` is the per-step Gaussian scale and
    ``c_tilde = dt * c / 2`` the rotation strength, where ``sigma`` is the
    scalar diffusion coefficient and ``c`` scales the block-antisymmetric
    matrix.  ``dt`` is kept for the holding rate ``1 / dt``.
    """

    stddev: float = 5e-3
    c_tilde: float = 2.5e-5
    dt: float = 1e-5

    def __post_init__(self):
        if not self.stddev > 0:
            raise ValueError("stddev must be positive")
        if not self.c_tilde >= 0:
            raise ValueError("c_tilde must be nonnegative")
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    @property
    def sigma(self):
        return self.stddev / math.sqrt(self.dt)

    @property
    def c(self):
        return 2.0 * self.c_tilde / self.dt

    @classmethod
    def from_diffusion(cls, sigma, c, dt):
        """Config for diffusion coefficient ``sigma`` and rotation scale ``c`` at step ``dt``."""
        return cls(stddev=math.sqrt(dt) * sigma, c_tilde=0.5 * dt * c, dt=dt)


@dataclass(frozen=True)
class MetropolisConfig:
    """Wrapped-Gaussian random walk mixed with independent uniform large steps."""

    stddev: float = 1e-2
    large_step_prob: float = 0.3

    def __post_init__(self):
        if not self.stddev > 0:
            raise ValueError("stddev must be positive")
        if not 0.0 <= self.large_step_prob <= 1.0:
            raise ValueError("large_step_prob must lie in [0, 1]")


@dataclass(frozen=True)
class MALAConfig:
    """Metropolis-adjusted Langevin proposals with optional large steps."""

    stddev: float = 5e-3
    large_step_prob: float = 0.3

    def __post_init__(self):
        if not self.stddev > 0:
            raise ValueError("stddev must be positive")
        if not 0.0 <= self.large_step_prob <= 1.0:
            raise ValueError("large_step_prob must lie in [0, 1]")


def rotate(v, c_tilde):
    """``c_tilde * (v2, -v1)`` applied to every consecutive pair of the last axis."""
    v = np.asarray(v, dtype=np.float64)
    out = np.empty_like(v)
    out[..., 0::2] = c_tilde * v[..., 1::2]
    out[..., 1::2] = -c_tilde * v[..., 0::2]
    return out


def langevin_drift(cfg, score):
    """Per-step drift ``(stddev^2 / 2 + c_tilde * A) score``."""
    score = np.asarray(score, dtype=np.float64)
    return 0.5 * cfg.stddev * cfg.stddev * score + rotate(score, cfg.c_tilde)


def _as_batch(x):
    x = np.asarray(x, dtype=np.float64)
    return np.atleast_2d(x), x.ndim == 1


def langevin_step(cfg, target, x, rng, score=None):
    """One wrapped Euler-Maruyama step from ``x``.

    ``score`` may be passed when already known at ``x``.
    """
    X, single = _as_batch(x)
    S = target.score(X) if score is None else np.atleast_2d(score)
    Z = rng.normal(X.shape[1])
    h = 0.5 * cfg.stddev * cfg.stddev
    # same association as the numba kernel: ((x + h s) + rot(s)) + stddev z
    Y = wrap(X + h * S + rotate(S, cfg.c_tilde) + cfg.stddev * Z)
    return Y[0] if single else Y


def _proposal_log_density(stddev, frm, to):
    """Log of the nearest-image wrapped Gaussian density, up to a shared constant.

    For ``stddev <= 1e-2`` the next image sits at least ``0.5 / stddev = 50``
    standard deviations out, a relative contribution below ``exp(-1250)``.
    """
    delta = toroidal_delta(frm, to)
    return -0.5 * np.sum(delta * delta, axis=-1) / (stddev * stddev)


def metropolis_step(cfg, target, x, p_x, rng):
    """Metropolis step against ``p + EPS``; returns ``(x_new, evaluation, accepted)``."""
    X, single = _as_batch(x)
    n, d = X.shape
    u_large, u_acc = rng.uniform_pair()
    large = u_large < cfg.large_step_prob
    Y = _propose_uniform_or_normal(rng, X, large, cfg.stddev, np.zeros_like(X))
    ev = target.evaluate(Y)
    p_x = np.atleast_1d(np.asarray(p_x, dtype=np.float64))
    accepted = u_acc * (p_x + EPS) < ev.p + EPS
    return _finish(target, X, p_x, Y, ev, accepted, single)


def mala_step(cfg, target, x, p_x, score_x, rng):
    """MALA step (small steps) or independent uniform proposal (large steps).

    Returns ``(x_new, evaluation, accepted)``.
    """
    X, single = _as_batch(x)
    n, d = X.shape
    S = np.atleast_2d(np.asarray(score_x, dtype=np.float64))
    h = 0.5 * cfg.stddev * cfg.stddev
    u_large, u_acc = rng.uniform_pair()
    large = u_large < cfg.large_step_prob
    Y = _propose_uniform_or_normal(rng, X, large, cfg.stddev, h * S)
    ev = target.evaluate(Y)
    p_x = np.atleast_1d(np.asarray(p_x, dtype=np.float64))
    log_ratio = np.log(ev.p + EPS) - np.log(p_x + EPS)
    small = ~large
    if np.any(small):
        Sy = target.score(Y[small])
        fwd = _proposal_log_density(cfg.stddev, X[small] + h * S[small], Y[small])
        bwd = _proposal_log_density(cfg.stddev, Y[small] + h * Sy, X[small])
        log_ratio[small] += bwd - fwd
    accepted = np.log1p(-u_acc) < log_ratio
    # log(1 - u) has the same law as log(u) and never hits log(0)
    return _finish(target, X, p_x, Y, ev, accepted, single)


def _propose_uniform_or_normal(rng, X, large, stddev, drift):
    n, d = X.shape
    draws = np.empty((n, d))
    for i in range(0, d, 2):
        u0, u1 = rng.uniform_pair()
        z0 = np.sqrt(-2.0 * np.log1p(-u0))
        t = 2.0 * np.pi * u1
        draws[:, i] = np.where(large, u0, z0 * np.cos(t))
        draws[:, i + 1] = np.where(large, u1, z0 * np.sin(t))
    small_y = wrap(X + drift + stddev * draws)
    return np.where(large[:, None], draws, small_y)


def _finish(target, X, p_x, Y, ev, accepted, single):
    Xn = np.where(accepted[:, None], Y, X)
    # rejected chains keep their old f and p
    old = target.evaluate(X)
    f = np.where(accepted[:, None], ev.f, old.f)
    p = np.where(accepted, ev.p, p_x)
    pix = pixel_index(Xn, target.width, target.height)
    if single:
        return Xn[0], TargetEvaluation(f[0], p[0], pix[0]), bool(accepted[0])
    return Xn, TargetEvaluation(f, p, pix), accepted


# ------------------------------------------------------------- numba kernels


@njit
def langevin_point(x, score, stddev, c_tilde, k0, k1, frame, tag, ctr):
    """In-place Langevin step of ``x``; returns the advanced counter."""
    h = 0.5 * stddev * stddev
    for b in range(x.shape[0] // 2):
        z0, z1 = normal_pair(k0, k1, frame, tag, ctr)
        ctr += ONE
        s0 = score[2 * b]
        s1 = score[2 * b + 1]
        x[2 * b] = wrap1(x[2 * b] + h * s0 + c_tilde * s1 + stddev * z0)
        x[2 * b + 1] = wrap1(x[2 * b + 1] + h * s1 - c_tilde * s0 + stddev * z1)
    return ctr


@njit
def propose_point(x, drift, y, large, stddev, k0, k1, frame, tag, ctr):
    """Fill ``y`` with a uniform draw (``large``) or ``wrap(x + drift + stddev * z)``."""
    for b in range(x.shape[0] // 2):
        u0, u1 = uniform_pair(k0, k1, frame, tag, ctr)
        ctr += ONE
        if large:
            y[2 * b] = u0
            y[2 * b + 1] = u1
        else:
            r = math.sqrt(-2.0 * math.log1p(-u0))
            t = 2.0 * math.pi * u1
            y[2 * b] = wrap1(x[2 * b] + drift[2 * b] + stddev * (r * math.cos(t)))
            y[2 * b + 1] = wrap1(x[2 * b + 1] + drift[2 * b + 1] + stddev * (r * math.sin(t)))
    return ctr


@njit
def proposal_logq(frm, drift, to, stddev):
    acc = 0.0
    for i in range(frm.shape[0]):
        dd = delta1(frm[i] + drift[i], to[i])
        acc += dd * dd
    return -0.5 * acc / (stddev * stddev)
