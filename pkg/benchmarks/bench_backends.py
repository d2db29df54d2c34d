"""Throughput of the numba kernels against the pure-numpy fallback.

    python3 benchmarks/bench_backends.py [--budget N] [--threads T] [--repeats R]

Runs every method on the uniform target, the three-mode mixture and the micro
Cornell box with both backends, reports the best-of-R wall time and the
speedup, and checks that both backends produce the same image (to rounding).
The first numba call per kernel is excluded (JIT compile / cache load).
"""

import argparse
import time

import numpy as np

from diffrestore.dynamics import LangevinConfig, MALAConfig, MetropolisConfig
from diffrestore.microrender import cornell_box
from diffrestore.restore import RestoreConfig, run_path_tracing, run_plain_mcmc, run_restore
from diffrestore.targets import UniformTarget, WrappedGaussianMixture

TARGETS = {
    "uniform": lambda: UniformTarget(),
    "mixture": lambda: WrappedGaussianMixture([0.5, 0.3, 0.2], [[0.3, 0.3], [0.7, 0.6], [0.4, 0.8]],
                                              [0.1, 0.07, 0.12]),
    "cornell": lambda: cornell_box(),
}

METHODS = {
    "pt": lambda t, n, th, b: run_path_tracing(t, n, threads=th, seed=0, backend=b),
    "metropolis": lambda t, n, th, b: run_plain_mcmc("metropolis", MetropolisConfig(), t, n, threads=th,
                                                     seed=0, backend=b),
    "mala": lambda t, n, th, b: run_plain_mcmc("mala", MALAConfig(), t, n, threads=th, seed=0, backend=b),
    "metropolis-restore": lambda t, n, th, b: run_restore(
        RestoreConfig(dispatch_count=64, holding="unit"), MetropolisConfig(large_step_prob=0.0), t, n,
        threads=th, seed=0, backend=b),
    "mala-restore": lambda t, n, th, b: run_restore(
        RestoreConfig(dispatch_count=64, holding="unit"), MALAConfig(large_step_prob=0.0), t, n,
        threads=th, seed=0, backend=b),
    "diffusion-restore": lambda t, n, th, b: run_restore(
        RestoreConfig(dispatch_count=64), LangevinConfig(), t, n, threads=th, seed=0, backend=b),
}


def best_time(fn, repeats):
    best, out = float("inf"), None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--budget", type=int, default=1 << 18, help="steps per run (default 2^18)")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    print(f"budget {args.budget}, threads {args.threads}, best of {args.repeats}")
    print(f"{'target':<9}{'method':<20}{'numba s':>10}{'numpy s':>10}{'speedup':>9}{'max |diff|':>12}")
    for tname, make in TARGETS.items():
        target = make()
        for mname, run in METHODS.items():
            run(target, 4096, 1, "numba")  # compile or load the cached kernels
            t_nb, (img_nb, _) = best_time(lambda: run(target, args.budget, args.threads, "numba"), args.repeats)
            t_np, (img_np, _) = best_time(lambda: run(target, args.budget, args.threads, "numpy"), 1)
            diff = float(np.max(np.abs(img_nb - img_np)))
            print(f"{tname:<9}{mname:<20}{t_nb:>10.3f}{t_np:>10.3f}{t_np / t_nb:>9.1f}{diff:>12.2e}")


if __name__ == "__main__":
    main()
