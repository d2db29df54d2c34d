"""Image error metrics and convergence-curve bookkeeping.

All metrics are computed in linear radiance, per pixel and channel, then
averaged.  ``MRSE`` and ``MAPE`` use the reference-anchored denominators
``r^2 + 1e-2`` and ``r + 1e-2``.
"""

import csv
from dataclasses import astuple, dataclass

import numpy as np

MRSE_OFFSET = 1e-2
MAPE_OFFSET = 1e-2
CURVE_COLUMNS = ("method", "budget", "seed", "mae", "mse", "mrse", "mape")


@dataclass(frozen=True)
class ErrorReport:
    mae: float
    mse: float
    mrse: float
    mape: float


def compare(test, ref):
    test = np.asarray(test, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if test.shape != ref.shape:
        raise ValueError(f"image shapes differ: {test.shape} vs {ref.shape}")
    if not np.all(np.isfinite(ref)):
        raise ValueError("reference image has non-finite values")
    diff = test - ref
    return ErrorReport(
        mae=float(np.mean(np.abs(diff))),
        mse=float(np.mean(diff * diff)),
        mrse=float(np.mean(diff * diff / (ref * ref + MRSE_OFFSET))),
        mape=float(np.mean(np.abs(diff) / (ref + MAPE_OFFSET))),
    )


@dataclass(frozen=True)
class CurveRow:
    method: str
    budget: int
    seed: int
    mae: float
    mse: float
    mrse: float
    mape: float


def convergence_curve(method, run, reference, budgets, seeds):
    """Run ``run(budget, seed) -> image`` for every pair and compare to ``reference``.

    Rows come back sorted by ``(budget, seed)``; callers use the same seed list
    for every method so rows align across methods.
    """
    budgets = list(budgets)
    if budgets != sorted(budgets):
        raise ValueError("budgets must be ascending")
    rows = []
    for budget in budgets:
        for seed in seeds:
            rep = compare(run(budget, seed), reference)
            rows.append(CurveRow(method, int(budget), int(seed), rep.mae, rep.mse, rep.mrse, rep.mape))
    rows.sort(key=lambda r: (r.budget, r.seed))
    return rows


def write_curves_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_COLUMNS)
        for r in rows:
            t = astuple(r)
            w.writerow(list(t[:3]) + [repr(float(v)) for v in t[3:]])


def read_curves_csv(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CURVE_COLUMNS:
            raise ValueError(f"unexpected curve columns {reader.fieldnames}")
        return [CurveRow(r["method"], int(r["budget"]), int(r["seed"]), float(r["mae"]), float(r["mse"]),
                         float(r["mrse"]), float(r["mape"])) for r in reader]


def loglog_slope(budgets, errors):
    """Least-squares slope of ``log(error)`` against ``log(budget)``."""
    return float(np.polyfit(np.log(np.asarray(budgets, float)), np.log(np.asarray(errors, float)), 1)[0])
