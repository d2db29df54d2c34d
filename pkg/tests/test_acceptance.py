"""End-to-end acceptance criteria.

Each test prints one ``CRITERION n PASS/FAIL`` line (also repeated in the
terminal summary) and fails when its criterion is not met.  Runtime on one
core is about 11 minutes; ``pytest -m "not acceptance"`` skips this file.
"""

import argparse
import dataclasses
import math
import os
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from conftest import make_mixture
from diffrestore import cli, experiment
from diffrestore.biaslab import TrigFunction, adjoint_bias_field, fit_loglog_slope, implied_pixel_bias, weak_residual
from diffrestore.config import load_config
from diffrestore.dynamics import (LangevinConfig, MALAConfig, MetropolisConfig, langevin_step, mala_step,
                                  metropolis_step)
from diffrestore.metrics import compare
from diffrestore.microrender import furnace_value
from diffrestore.reference import cell_masses, quadrature_image, rejection_sample
from diffrestore.restore import (AccumulationImage, ChainState, RestoreConfig, evolve, killing_rate,
                                 holding_rate, run_path_tracing, run_restore)
from diffrestore.rng import CounterRNG
from diffrestore.targets import UniformTarget

pytestmark = pytest.mark.acceptance

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
THREADS = os.cpu_count() or 1
MSE_THRESHOLD = 1e-4


def _bench(name):
    cfg = load_config(CONFIGS / name)
    rows, summary, _ = experiment.bench(cfg, threads=THREADS)
    return cfg, rows, summary


# ------------------------------------------------------------------ 1


def test_criterion_1_estimator_consistency(acceptance_report):
    failures, lines = [], []
    for target in ("uniform", "gaussian", "mixture"):
        cfg, rows, summary = _bench(f"bench_consistency_{target}.toml")
        for s in summary:
            curve = [r.mse for r in rows if r.method == s.method]
            monotone = all(b <= a for a, b in zip(curve, curve[1:]))
            lines.append(f"{target}/{s.method}={s.median_mse:.2e}")
            if not (s.median_mse < MSE_THRESHOLD and monotone):
                failures.append(f"{target}/{s.method}")
    acceptance_report(1, "MSE < 1e-4 vs 256^2 quadrature at 1e7 steps", not failures,
                      "; ".join(lines) + (f" | failing: {', '.join(failures)}" if failures else ""))


# ------------------------------------------------------------------ 2


def _branch_law(n_steps=30000, bins=8):
    """Kill decisions of one Diffusion Restore chain, binned by density."""
    target = make_mixture()
    cfg = RestoreConfig(m=4, dt=1e-5).resolved(1.0)
    dyn = LangevinConfig(stddev=5e-3, c_tilde=2.5e-5, dt=1e-5)
    acc = AccumulationImage.for_target(target)
    chain = ChainState.new(0, seed=2)
    p = np.empty(n_steps)
    killed = np.empty(n_steps, dtype=bool)
    for i in range(n_steps):
        evolve(chain, cfg, dyn, target, acc)
        p[i], killed[i] = chain.p, chain.killed
    kap = killing_rate(cfg, p)
    q = kap / (holding_rate(cfg) + kap)
    edges = np.quantile(p, np.linspace(0, 1, bins + 1))
    which = np.clip(np.searchsorted(edges, p, side="right") - 1, 0, bins - 1)
    z = []
    for b in range(bins):
        sel = which == b
        expected = q[sel].sum()
        sd = math.sqrt((q[sel] * (1 - q[sel])).sum())
        z.append((killed[sel].sum() - expected) / sd)
    return np.array(z)


def _tour_law(budget=1 << 20, m=64, n_bins=20):
    """Chi-square of completed tour lengths on the uniform target against Geometric(1/(m+1))."""
    cfg = RestoreConfig(m=m, dispatch_count=64)
    _, st = run_restore(cfg, LangevinConfig(), UniformTarget(), budget, threads=THREADS, seed=5)
    hist = st.tour_hist
    kappa = killing_rate(cfg.resolved(1.0), 1.0)
    q = kappa / (holding_rate(cfg) + kappa)  # = 1 / (m + 1) up to EPS
    # equal-probability bins of the geometric law on {0, 1, ...}
    edges = np.unique(np.ceil(np.log1p(-np.arange(n_bins) / n_bins) / math.log1p(-q)).astype(int))
    j = np.arange(hist.size)
    obs = np.add.reduceat(hist, edges).astype(float)
    cdf = 1.0 - (1.0 - q) ** edges  # P(L < edge)
    probs = np.diff(np.append(cdf, 1.0))
    expected = probs * st.tours
    chi2 = float(((obs - expected) ** 2 / expected).sum())
    pval = float(stats.chi2.sf(chi2, len(obs) - 1))
    mean = float((j * hist).sum() / st.tours)
    sd = math.sqrt((1 - q)) / q
    return st.tours, mean, sd, chi2, pval


def test_criterion_2_branch_and_tour_laws(acceptance_report):
    z = _branch_law()
    tours, mean, sd, chi2, pval = _tour_law()
    mean_ok = abs(mean - 64) <= 3 * sd / math.sqrt(tours)
    ok = bool(np.all(np.abs(z) <= 3)) and tours >= 10 ** 4 and pval >= 0.01 and mean_ok
    acceptance_report(2, "kill fraction per density bin within 3 sigma; geometric tours with mean m = 64", ok,
                      f"bin z-scores {np.array2string(z, precision=2)}; {tours} tours, mean length "
                      f"{mean:.2f} (3 sigma band {3 * sd / math.sqrt(tours):.2f}), chi2 p = {pval:.3f}")


# ------------------------------------------------------------------ 3


def test_criterion_3_bias_decay(acceptance_report):
    cfg = load_config(CONFIGS / "bias_mixture.toml")
    res = experiment.bias(cfg)
    spec, target = cfg.bias, cfg.target.build()
    fine = adjoint_bias_field(LangevinConfig.from_diffusion(spec.sigma, spec.c, 1e-5), target, spec.grid_n)
    implied = float(np.max(np.abs(implied_pixel_bias(fine, 1.0, spec.m, 1e-5))))
    # Monte Carlo noise floor of the mixture run of criterion 1: RMS error of
    # path tracing (the lowest-variance method there) at 1e7 steps.
    image, _ = run_path_tracing(target, 10 ** 7, threads=THREADS, seed=0)
    floor = math.sqrt(compare(image, quadrature_image(target)).mse)
    slope_ok = res.slope is not None and abs(res.slope - 1.0) <= 0.2
    ok = slope_ok and fine.sup_norm() < floor and implied < floor
    acceptance_report(3, "O(dt) bias decay", ok,
                      f"slope {res.slope:.3f} over dt={list(res.dts)}; at dt=1e-5 sup|field| = "
                      f"{fine.sup_norm():.2e}, implied pixel bias {implied:.2e}, MC noise floor (RMS) {floor:.2e}")


# ------------------------------------------------------------------ 4


def test_criterion_4_weak_error_expansion(acceptance_report):
    target = make_mixture()
    rng = np.random.default_rng(2024)
    x = rng.random((32, 2))
    dts = [1e-2, 3e-3, 1e-3, 3e-4, 1e-4]
    slopes = []
    for _ in range(5):
        phi = TrigFunction.random(rng)
        res = [weak_residual(LangevinConfig.from_diffusion(0.5, 0.25, dt), target, phi, x) for dt in dts]
        slopes.append(fit_loglog_slope(dts, res))
    ok = all(s is not None and s >= 0.8 for s in slopes)
    acceptance_report(4, "(L_K - L) phi / dt -> C phi with residual slope >= 0.8", ok,
                      "slopes " + ", ".join(f"{s:.3f}" for s in slopes))


# ------------------------------------------------------------------ 5


def _ordering(name):
    cfg, rows, summary = _bench(name)
    med = {s.method: s.median_mse for s in summary}
    per_seed = {}
    for r in rows:
        per_seed.setdefault(r.seed, {})[r.method] = r.mse
    dr_mala = sum(v["diffusion-restore"] < v["mala-restore"] for v in per_seed.values())
    mala_pt = sum(v["mala-restore"] < v["pt"] for v in per_seed.values())
    ok = (med["diffusion-restore"] < med["mala-restore"] < med["pt"]) and dr_mala >= 6 and mala_pt >= 6
    detail = (f"median MSE DR {med['diffusion-restore']:.2e}, MALA-R {med['mala-restore']:.2e}, "
              f"PT {med['pt']:.2e}; paired DR<MALA-R {dr_mala}/8, MALA-R<PT {mala_pt}/8")
    return ok, detail


def test_criterion_5_method_ordering(acceptance_report):
    ok_m, det_m = _ordering("bench_ordering_mixture.toml")
    ok_c, det_c = _ordering("bench_ordering_cornell.toml")
    acceptance_report(5, "DR < MALA-R < PT at equal sample count", ok_m and ok_c,
                      f"mixture [{det_m}]; cornell [{det_c}]")


# ------------------------------------------------------------------ 6


def test_criterion_6_furnace(acceptance_report):
    cfg = load_config(CONFIGS / "furnace.toml")
    image, st = experiment.render(cfg, threads=THREADS)
    spp = st.steps // (cfg.target.width * cfg.target.height)
    t = cfg.target
    expected = furnace_value(t.albedo, t.emission, t.depth)
    rel = float(np.max(np.abs(image / expected - 1.0)))
    acceptance_report(6, "furnace box within 1% per pixel", spp == 1 << 14 and rel < 0.01,
                      f"{spp} spp, expected {expected}, max relative error {rel:.2e}")


# ------------------------------------------------------------------ 7


def _shrunk(cfg):
    """Cheaper variant of a bench/bias config for the determinism check."""
    if cfg.bench is not None:
        b = cfg.bench
        return dataclasses.replace(cfg, bench=dataclasses.replace(
            b, budgets=(min(b.budgets[0], 1 << 17),), seeds=b.seeds[:2], reference_spp=min(b.reference_spp, 256)))
    if cfg.bias is not None:
        return dataclasses.replace(cfg, bias=dataclasses.replace(cfg.bias, dts=cfg.bias.dts[:2]))
    return cfg


def _artifacts(out):
    return {p.name: p.read_bytes() for p in sorted(Path(out).iterdir())
            if p.suffix in (".pfm", ".csv") and p.name != "stats.csv"}


def test_criterion_7_determinism(acceptance_report, tmp_path):
    failures, checked = [], []
    for path in sorted(CONFIGS.glob("*.toml")):
        cfg = _shrunk(load_config(path))
        cmd = cli.cmd_render if cfg.method is not None else cli.cmd_bench if cfg.bench is not None else cli.cmd_bias
        outputs = []
        for run, threads in enumerate((1, 1, 8)):
            out = tmp_path / f"{path.stem}-{run}"
            cmd(argparse.Namespace(threads=threads, out=str(out), seed=None), cfg)
            outputs.append(_artifacts(out))
        if not outputs[0] or not outputs[0] == outputs[1] == outputs[2]:
            failures.append(path.name)
        checked.append(path.stem)
    acceptance_report(7, "byte-identical artifacts across runs and thread counts {1, 8}", not failures,
                      f"{len(checked)} configs ({', '.join(checked)})"
                      + (f" | differing: {', '.join(failures)}" if failures else ""))


# ------------------------------------------------------------------ 8


def _chi2_histogram(target, X, n=32):
    """Chi-square of a 32x32 histogram against the exact cell masses (cells with expected < 5 pooled)."""
    probs = cell_masses(target, n).ravel()
    ix = np.minimum((X[:, 0] * n).astype(int), n - 1)
    iy = np.minimum((X[:, 1] * n).astype(int), n - 1)
    obs = np.bincount(iy * n + ix, minlength=n * n).astype(float)
    exp = probs * len(X)
    small = exp < 5
    obs = np.append(obs[~small], obs[small].sum())
    exp = np.append(exp[~small], exp[small].sum())
    return float(stats.chi2.sf(((obs - exp) ** 2 / exp).sum(), len(exp) - 1))


def _run_kernel(kind, target, X, steps=100):
    rng = CounterRNG.streams(len(X), 3)
    p = target.density(X)
    for _ in range(steps):
        if kind == "metropolis":
            X, ev, _ = metropolis_step(MetropolisConfig(), target, X, p, rng)
            p = ev.p
        elif kind == "mala":
            X, ev, _ = mala_step(MALAConfig(), target, X, p, target.score(X), rng)
            p = ev.p
        else:
            X = langevin_step(LangevinConfig.from_diffusion(1.0, 0.0, 1e-2), target, X, rng)
    return X


def test_criterion_8_mcmc_invariance(acceptance_report):
    target = make_mixture()
    X0 = rejection_sample(target, 10 ** 4, np.random.default_rng(1))
    pv = {kind: _chi2_histogram(target, _run_kernel(kind, target, X0)) for kind in ("metropolis", "mala", "ula")}
    ok = pv["metropolis"] >= 0.01 and pv["mala"] >= 0.01 and pv["ula"] < 0.01
    acceptance_report(8, "Metropolis/MALA keep p invariant, unadjusted Langevin (dt = 1e-2) does not", ok,
                      ", ".join(f"{k} chi2 p = {v:.3g}" for k, v in pv.items()))
