"""Experiment runners behind the CLI: render, bench and bias.

These functions compute results and leave file output to :mod:`diffrestore.cli`.
"""

from dataclasses import dataclass

import numpy as np

from .biaslab import adjoint_bias_field, fit_loglog_slope, implied_pixel_bias
from .config import ConfigError
from .dynamics import LangevinConfig
from .metrics import convergence_curve
from .microrender import render_reference
from .reference import quadrature_image
from .restore import run_path_tracing, run_plain_mcmc, run_restore

# Bias fields whose sup-norm stays below this at every step size are treated
# as numerically zero (the uniform target gives ~1e-12 quadrature noise).
DEGENERATE_SUP = 1e-8


def make_runner(spec, target, threads=1, backend=None):
    """``run(budget, seed) -> (image, RunStats)`` for one :class:`MethodSpec`."""
    name = spec.name
    if name == "pt":
        return lambda budget, seed: run_path_tracing(target, budget, threads=threads, seed=seed,
                                                     backend=backend)
    dynamics = spec.dynamics()
    if name in ("metropolis", "mala"):
        return lambda budget, seed: run_plain_mcmc(name, dynamics, target, budget, threads=threads,
                                                   seed=seed, backend=backend, chains=spec.chains)
    cfg = spec.restore_config()
    return lambda budget, seed: run_restore(cfg, dynamics, target, budget, threads=threads, seed=seed,
                                            backend=backend)


def render(cfg, threads=None, seed=None, backend=None):
    """Run the config's ``[method]`` on its target; returns ``(image, stats)``."""
    spec = cfg.require("method")
    target = cfg.target.build()
    run = make_runner(spec, target, cfg.threads if threads is None else threads, backend)
    return run(spec.budget, cfg.seed if seed is None else seed)


def reference_image(cfg, threads=1, backend=None):
    """Quadrature for analytic ``d = 2`` targets, high-budget path tracing otherwise."""
    bench = cfg.require("bench")
    target = cfg.target.build()
    kind = bench.reference
    if kind == "auto":
        kind = "quadrature" if cfg.target.kind in ("uniform", "mixture") and target.dim == 2 else "pt"
    if kind == "quadrature":
        return quadrature_image(target, nodes_per_axis=_quadrature_nodes(target))
    return render_reference(target, bench.reference_spp, threads=threads, seed=bench.reference_seed,
                            backend=backend)


def _quadrature_nodes(target):
    """At least 256 nodes per axis, a multiple of both image dimensions."""
    lcm = int(np.lcm(target.width, target.height))
    return lcm * -(-256 // lcm)


@dataclass(frozen=True)
class SummaryRow:
    method: str
    budget: int
    seeds: int
    median_mae: float
    median_mse: float
    median_mrse: float
    median_mape: float

    COLUMNS = ("method", "budget", "seeds", "median_mae", "median_mse", "median_mrse", "median_mape")


def bench(cfg, threads=None, seeds=None, backend=None, reference=None):
    """Convergence curves for every method; returns ``(rows, summary, reference)``.

    The summary holds per-method medians over seeds at the final budget.
    """
    spec = cfg.require("bench")
    threads = cfg.threads if threads is None else threads
    seeds = spec.seeds if seeds is None else tuple(seeds)
    target = cfg.target.build()
    ref = reference_image(cfg, threads, backend) if reference is None else reference
    rows = []
    for method in spec.methods:
        run = make_runner(method, target, threads, backend)
        rows.extend(convergence_curve(method.name, lambda b, s: run(b, s)[0], ref, spec.budgets, seeds))
    final = spec.budgets[-1]
    summary = []
    for method in spec.methods:
        sel = [r for r in rows if r.method == method.name and r.budget == final]
        summary.append(SummaryRow(method.name, final, len(sel),
                                  *(float(np.median([getattr(r, k) for r in sel]))
                                    for k in ("mae", "mse", "mrse", "mape"))))
    return rows, summary, ref


@dataclass
class BiasResult:
    dts: tuple
    fields: list
    sup_norms: list
    implied_bias: list  # sup-norm of the implied pixel bias per step size
    slope: float  # None when degenerate
    status: str  # "fit" or "degenerate"


def bias(cfg):
    """Adjoint bias fields over the configured step sizes and their decay slope."""
    spec = cfg.require("bias")
    target = cfg.target.build()
    if target.dim != 2:
        raise ConfigError(f"{cfg.path}: the bias sweep needs a d = 2 target")
    p_lambda = target.normalization
    if p_lambda is None:
        p_lambda = float(quadrature_image(target).mean())
    fields, sups, implied = [], [], []
    for dt in spec.dts:
        lcfg = LangevinConfig.from_diffusion(spec.sigma, spec.c, dt)
        f = adjoint_bias_field(lcfg, target, spec.grid_n)
        fields.append(f)
        sups.append(f.sup_norm())
        implied.append(float(np.max(np.abs(implied_pixel_bias(f, p_lambda, spec.m, dt)))))
    slope = None
    if max(sups) > DEGENERATE_SUP:
        slope = fit_loglog_slope(spec.dts, sups)
    return BiasResult(spec.dts, fields, sups, implied, slope, "fit" if slope is not None else "degenerate")
