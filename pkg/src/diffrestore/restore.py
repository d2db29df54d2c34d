"""Restore engine: exponential holding, density-sensitive killing, uniform
regeneration, accumulation and the tour-count estimator.

Also hosts the two baseline drivers sharing the same plumbing: plain
Metropolis/MALA chains with a bootstrap normalization, and pixel-stratified
independent sampling (path tracing).

Determinism: chains (and pixels, for path tracing) are grouped into fixed
blocks of ``BLOCK`` whose private buffers are summed in block order, so the
result does not depend on the thread count.  Each chain owns the Philox stream
keyed by ``(chain index, seed)``.
"""

import dataclasses
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _engine_nb as nb
from . import _engine_np as npe
from ._backend import resolve_backend
from .dynamics import (LangevinConfig, MALAConfig, MetropolisConfig, langevin_step, mala_step,
                       metropolis_step)
from .rng import TAG_BOOTSTRAP, TAG_CHAIN, CounterRNG
from .targets import EPS, pixel_index, uniform_points
from .torus import sample_uniform

BLOCK = 64
# Plain MCMC bootstraps an unknown p_lambda from budget // BOOTSTRAP_DIVISOR
# uniform samples (at least one per pixel), on top of the step budget.
BOOTSTRAP_DIVISOR = 16
TOUR_HIST_BINS = 1 << 16
HOLDING_MODES = ("embedded", "unit")


@dataclass(frozen=True)
class RestoreConfig:
    """Engine parameters.

    ``kappa0`` and ``p_lambda`` may be left ``None``; the drivers then use the
    target's known normalization (or a bootstrap estimate) and derive
    ``kappa0 = p_lambda / (m * dt)`` (``p_lambda / m`` for unit holding).
    """

    m: float = 64.0
    kappa0: float = None
    dt: float = 1e-5
    p_lambda: float = None
    dispatch_count: int = 1024
    holding: str = "embedded"

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError("m must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.kappa0 is not None and not (self.kappa0 > 0 and math.isfinite(self.kappa0)):
            raise ValueError("kappa0 must be positive and finite")
        if self.p_lambda is not None and not self.p_lambda >= 0:
            raise ValueError("p_lambda must be nonnegative")
        if self.dispatch_count < 1:
            raise ValueError("dispatch_count must be >= 1")
        if self.holding not in HOLDING_MODES:
            raise ValueError(f"holding must be one of {HOLDING_MODES}, got {self.holding!r}")

    def derived_kappa0(self, p_lambda):
        step = self.dt if self.holding == "embedded" else 1.0
        return p_lambda / (self.m * step)

    def resolved(self, p_lambda):
        """Copy with ``p_lambda`` and ``kappa0`` filled in."""
        p_lambda = self.p_lambda if self.p_lambda is not None else p_lambda
        kappa0 = self.kappa0 if self.kappa0 is not None else self.derived_kappa0(p_lambda)
        return dataclasses.replace(self, p_lambda=p_lambda, kappa0=kappa0)


def holding_rate(cfg):
    """``1 / dt`` for the embedded chain, ``1`` for unit holding."""
    if not cfg.dt > 0:
        raise ValueError("dt must be positive")
    return 1.0 / cfg.dt if cfg.holding == "embedded" else 1.0


def killing_rate(cfg, p, regen_density_ratio=1.0):
    """``regen_density_ratio * kappa0 / (p + EPS)``."""
    if cfg.kappa0 is None:
        raise ValueError("kappa0 is not set; use RestoreConfig.resolved()")
    return regen_density_ratio * cfg.kappa0 / (np.asarray(p, dtype=np.float64) + EPS)


# ------------------------------------------------------- single-chain API


@dataclass
class ChainState:
    rng: CounterRNG
    x: np.ndarray = None
    pixel_index: int = -1
    p: float = 0.0
    f: np.ndarray = field(default_factory=lambda: np.zeros(3))
    f_over_p: np.ndarray = field(default_factory=lambda: np.zeros(3))
    killed: bool = True
    tour_len: int = 0

    @classmethod
    def new(cls, index, seed, frame=0):
        """Chain ``index`` of a run; its first ``evolve`` samples ``x`` from the regeneration law."""
        return cls(CounterRNG.single(seed, index=index, frame=frame, tag=TAG_CHAIN))


@dataclass
class AccumulationImage:
    width: int
    height: int
    buffer: np.ndarray = None
    tour_count: int = 0
    steps: int = 0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("image must have at least one pixel")
        if self.buffer is None:
            self.buffer = np.zeros((self.width * self.height, 3))

    @classmethod
    def for_target(cls, target):
        return cls(target.width, target.height)


def _set_state(chain, target, f, p):
    chain.f = np.asarray(f, dtype=np.float64)
    chain.p = float(p)
    chain.pixel_index = int(pixel_index(chain.x, target.width, target.height))
    chain.f_over_p = chain.f / chain.p if chain.p > 0 else np.zeros(3)


def accumulate(chain, cfg, target, acc):
    """Race the holding and killing clocks at ``chain.x`` and record the holding time.

    Uses ``chain.f`` / ``chain.p``, which ``evolve`` keeps current.
    """
    lam = holding_rate(cfg)
    kap = float(killing_rate(cfg, chain.p))
    u1, u2 = chain.rng.uniform_pair()
    t1 = -math.log1p(-float(u1[0])) / lam
    t2 = -math.log1p(-float(u2[0])) / kap
    acc.steps += 1
    chain.killed = not t1 < t2
    dtau = t2 if chain.killed else t1
    if chain.killed:
        acc.tour_count += 1
    if chain.p > 0:
        w = dtau * (acc.width * acc.height)
        acc.buffer[chain.pixel_index] += w * chain.f_over_p
    return chain


def evolve(chain, cfg, dynamics, target, acc, nu=None):
    """One local step (or a regeneration from ``nu``) followed by ``accumulate``.

    ``nu(rng, d)`` samples the regeneration law; the default is uniform on the torus.
    """
    if chain.killed:
        chain.x = sample_uniform(chain.rng, target.dim) if nu is None else np.asarray(nu(chain.rng, target.dim))
        ev = target.evaluate(chain.x)
        chain.tour_len = 0
        _set_state(chain, target, ev.f, ev.p)
    else:
        if isinstance(dynamics, LangevinConfig):
            chain.x = langevin_step(dynamics, target, chain.x, chain.rng)
            ev = target.evaluate(chain.x)
            f, p = ev.f, ev.p
        elif isinstance(dynamics, MALAConfig):
            chain.x, ev, _ = mala_step(dynamics, target, chain.x, chain.p, target.score(chain.x), chain.rng)
            f, p = ev.f, ev.p
        elif isinstance(dynamics, MetropolisConfig):
            chain.x, ev, _ = metropolis_step(dynamics, target, chain.x, chain.p, chain.rng)
            f, p = ev.f, ev.p
        else:
            raise TypeError(f"unsupported dynamics {type(dynamics).__name__}")
        chain.tour_len += 1
        _set_state(chain, target, f, p)
    return accumulate(chain, cfg, target, acc)


def resolve(acc, cfg):
    """``kappa0 / tour_count * buffer`` as an ``(H, W, 3)`` image."""
    if cfg.kappa0 is None:
        raise ValueError("kappa0 is not set; use RestoreConfig.resolved()")
    if acc.tour_count == 0:
        warnings.warn("no tour completed; resolve returns a zero image", RuntimeWarning, stacklevel=2)
        return np.zeros((acc.height, acc.width, 3))
    return (cfg.kappa0 / acc.tour_count * acc.buffer).reshape(acc.height, acc.width, 3)


# ------------------------------------------------------------------ drivers


@dataclass
class RunStats:
    method: str
    steps: int
    tours: int = 0
    mean_tour_len: float = 0.0
    kill_frac: float = 0.0
    wall_ms: float = 0.0
    accept_rate: float = float("nan")
    p_lambda: float = float("nan")
    kappa0: float = float("nan")
    tour_hist: np.ndarray = None
    stderr: np.ndarray = None  # per-pixel standard error (path tracing only)

    CSV_COLUMNS = ("method", "steps", "tours", "mean_tour_len", "kill_frac", "wall_ms")

    def csv_row(self):
        return [self.method, self.steps, self.tours, repr(float(self.mean_tour_len)),
                repr(float(self.kill_frac)), f"{self.wall_ms:.3f}"]


def method_name(dynamics, restore=True):
    base = {LangevinConfig: "diffusion", MetropolisConfig: "metropolis", MALAConfig: "mala"}[type(dynamics)]
    return f"{base}-restore" if restore else base


def _dyn_code(dynamics):
    if isinstance(dynamics, LangevinConfig):
        return nb.DYN_LANGEVIN, dynamics.stddev, dynamics.c_tilde, 0.0
    if isinstance(dynamics, MetropolisConfig):
        return nb.DYN_METROPOLIS, dynamics.stddev, 0.0, dynamics.large_step_prob
    if isinstance(dynamics, MALAConfig):
        return nb.DYN_MALA, dynamics.stddev, 0.0, dynamics.large_step_prob
    raise TypeError(f"unsupported dynamics {type(dynamics).__name__}")


def _run_blocks(fn, nblocks, threads):
    threads = max(1, int(threads))
    if threads == 1 or nblocks == 1:
        return [fn(b) for b in range(nblocks)]
    with ThreadPoolExecutor(max_workers=min(threads, nblocks)) as ex:
        return list(ex.map(fn, range(nblocks)))


def _sum_blocks(parts):
    """Sum per-block arrays in block order (fixed, thread-independent)."""
    total = np.zeros_like(parts[0])
    for part in parts:
        total += part
    return total


def _check_target(target):
    if target.pixel_count < 1:
        raise ValueError("target has no pixels")


def bootstrap_normalization(target, seed, frame=0, n=None):
    """Mean of ``p`` over ``n`` (default: one per pixel) uniform samples.

    Returns ``(p_lambda, X, p)``; the samples are reused to start plain chains.
    """
    n = target.pixel_count if n is None else int(n)
    rng = CounterRNG.single(seed, frame=frame, tag=TAG_BOOTSTRAP)
    X = uniform_points(rng, n, target.dim)
    p = target.density(X)
    return float(p.mean()), X, p


def _p_lambda(cfg, target, seed, frame):
    if cfg.p_lambda is not None:
        return cfg.p_lambda
    if target.normalization is not None:
        return float(target.normalization)
    return bootstrap_normalization(target, seed, frame)[0]


def run_restore(cfg, dynamics, target, budget, threads=1, seed=0, frame=0, backend=None, nu=None):
    """Evolve ``dispatch_count`` chains for ``budget // dispatch_count`` rounds and resolve.

    ``budget`` counts evolve calls (local steps plus regenerations).  Only
    uniform regeneration is supported by the parallel engine.
    """
    if nu is not None:
        raise ValueError("the parallel engine regenerates uniformly; use evolve() for custom laws")
    if budget < 1:
        raise ValueError("budget must be >= 1")
    _check_target(target)
    if isinstance(dynamics, LangevinConfig) and cfg.holding == "embedded" and dynamics.dt != cfg.dt:
        raise ValueError(f"Langevin dt ({dynamics.dt}) differs from the holding dt ({cfg.dt})")
    backend = resolve_backend(backend)
    t0 = time.perf_counter()
    cfg = cfg.resolved(_p_lambda(cfg, target, seed, frame))
    chains = min(cfg.dispatch_count, int(budget))
    rounds = int(budget) // chains
    lam = holding_rate(cfg)
    dyn, stddev, c_tilde, large_p = _dyn_code(dynamics)
    pk = target.pack()
    d = target.dim
    npix = target.pixel_count
    nblocks = -(-chains // BLOCK)

    if backend == "numba":
        def work(b):
            lo, hi = b * BLOCK, min((b + 1) * BLOCK, chains)
            buf = np.zeros((npix, 3))
            hist = np.zeros(TOUR_HIST_BINS, dtype=np.int64)
            counts = np.zeros(nb.N_COUNTS, dtype=np.int64)
            nb.restore_block(pk, d, dyn, stddev, c_tilde, large_p, lam, cfg.kappa0, seed, frame,
                             lo, hi, rounds, buf, hist, counts)
            return buf, hist, counts

        parts = _run_blocks(work, nblocks, threads)
        bufs = [p[0] for p in parts]
        hists = [p[1] for p in parts]
        counts = [p[2] for p in parts]
    else:
        b, h, c = npe.restore(pk, d, dyn, stddev, c_tilde, large_p, lam, cfg.kappa0, seed, frame,
                              chains, BLOCK, rounds, TOUR_HIST_BINS)
        bufs, hists, counts = list(b), list(h), list(c)

    acc = AccumulationImage(target.width, target.height, _sum_blocks(bufs))
    hist = _sum_blocks(hists)
    counts = _sum_blocks(counts)
    acc.tour_count = int(counts[nb.C_TOURS])
    acc.steps = int(counts[nb.C_STEPS])
    image = resolve(acc, cfg)
    proposed = counts[nb.C_PROPOSED]
    stats = RunStats(
        method=method_name(dynamics),
        steps=acc.steps,
        tours=acc.tour_count,
        mean_tour_len=counts[nb.C_LEN_SUM] / acc.tour_count if acc.tour_count else 0.0,
        kill_frac=acc.tour_count / acc.steps,
        wall_ms=(time.perf_counter() - t0) * 1e3,
        accept_rate=counts[nb.C_ACCEPTED] / proposed if proposed else float("nan"),
        p_lambda=cfg.p_lambda,
        kappa0=cfg.kappa0,
        tour_hist=hist,
    )
    return image, stats


def run_plain_mcmc(kind, cfg, target, budget, threads=1, seed=0, frame=0, backend=None, chains=1024,
                   p_lambda=None):
    """Plain Metropolis / MALA with the importance estimator ``p_lambda * f / p``.

    ``p_lambda`` defaults to the target's known normalization, otherwise to
    a bootstrap mean over ``max(npix, budget // BOOTSTRAP_DIVISOR)`` uniform
    samples.  Chains start from the bootstrap samples resampled in proportion
    to ``p``; each of the ``N`` post-transition states adds
    ``npix * p_lambda / N * f / p`` to its pixel.
    """
    expected = {"metropolis": MetropolisConfig, "mala": MALAConfig}
    if kind not in expected:
        raise ValueError(f"kind must be 'metropolis' or 'mala', got {kind!r}")
    if not isinstance(cfg, expected[kind]):
        raise TypeError(f"{kind} needs a {expected[kind].__name__}")
    if budget < 1:
        raise ValueError("budget must be >= 1")
    _check_target(target)
    backend = resolve_backend(backend)
    t0 = time.perf_counter()
    if p_lambda is None and target.normalization is not None:
        p_lambda = float(target.normalization)
    n_boot = target.pixel_count
    if p_lambda is None:
        n_boot = max(n_boot, int(budget) // BOOTSTRAP_DIVISOR)
    boot_p_lambda, boot_x, boot_p = bootstrap_normalization(target, seed, frame, n=n_boot)
    p_lambda = boot_p_lambda if p_lambda is None else float(p_lambda)
    chains = min(int(chains), int(budget))
    steps = int(budget) // chains
    npix = target.pixel_count
    dyn, stddev, _, large_p = _dyn_code(cfg)
    stats = RunStats(method=kind, steps=chains * steps, p_lambda=p_lambda)
    if not boot_p.sum() > 0:
        warnings.warn("bootstrap found no positive density; returning a zero image", RuntimeWarning,
                      stacklevel=2)
        stats.wall_ms = (time.perf_counter() - t0) * 1e3
        return np.zeros((target.height, target.width, 3)), stats
    cdf = np.cumsum(boot_p)
    pk = target.pack()
    d = target.dim
    nblocks = -(-chains // BLOCK)

    if backend == "numba":
        def work(b):
            lo, hi = b * BLOCK, min((b + 1) * BLOCK, chains)
            buf = np.zeros((npix, 3))
            counts = np.zeros(nb.N_COUNTS, dtype=np.int64)
            nb.mcmc_block(pk, d, dyn, stddev, large_p, seed, frame, lo, hi, steps, boot_x, cdf, buf, counts)
            return buf, counts

        parts = _run_blocks(work, nblocks, threads)
        bufs = [p[0] for p in parts]
        counts = [p[1] for p in parts]
    else:
        b, c = npe.mcmc(pk, d, dyn, stddev, large_p, seed, frame, chains, BLOCK, steps, boot_x, cdf)
        bufs, counts = list(b), list(c)

    buf = _sum_blocks(bufs)
    counts = _sum_blocks(counts)
    n = chains * steps
    image = (npix * p_lambda / n * buf).reshape(target.height, target.width, 3)
    stats.accept_rate = counts[nb.C_ACCEPTED] / counts[nb.C_PROPOSED]
    stats.wall_ms = (time.perf_counter() - t0) * 1e3
    return image, stats


def run_path_tracing(target, budget, threads=1, seed=0, frame=0, backend=None):
    """Pixel-stratified independent sampling with ``budget // pixel_count`` samples per pixel."""
    _check_target(target)
    npix = target.pixel_count
    spp = int(budget) // npix
    if spp < 1:
        raise ValueError(f"budget {budget} is below one sample per pixel ({npix} pixels)")
    backend = resolve_backend(backend)
    t0 = time.perf_counter()
    pk = target.pack()
    d = target.dim
    nblocks = -(-npix // BLOCK)

    if backend == "numba":
        def work(b):
            lo, hi = b * BLOCK, min((b + 1) * BLOCK, npix)
            buf = np.zeros((hi - lo, 3))
            buf_sq = np.zeros((hi - lo, 3))
            nb.pt_block(pk, d, seed, frame, lo, hi, spp, buf, buf_sq)
            return buf, buf_sq

        parts = _run_blocks(work, nblocks, threads)
    else:
        parts = [npe.path_tracing(pk, d, seed, frame, 0, npix, spp)]
    total = np.concatenate([p[0] for p in parts])
    total_sq = np.concatenate([p[1] for p in parts])
    mean = total / spp
    var = np.maximum(total_sq / spp - mean * mean, 0.0)
    stderr = np.sqrt(var / max(spp - 1, 1))
    image = mean.reshape(target.height, target.width, 3)
    stats = RunStats(method="pt", steps=spp * npix, wall_ms=(time.perf_counter() - t0) * 1e3,
                     stderr=stderr.reshape(target.height, target.width, 3))
    return image, stats
