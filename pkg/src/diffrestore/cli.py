"""Command-line harness: ``diffrestore render|bench|bias <config>``.

Precedence for the thread count and output directory: command-line flag,
then the ``DIFFRESTORE_THREADS`` / ``DIFFRESTORE_OUT`` environment variables,
then the config file.

Exit codes: 0 success, 2 config error, 3 I/O error, 4 NaN in the outputs.
"""

import argparse
import csv
import logging
import os
import sys
from dataclasses import astuple

import numpy as np

from . import experiment
from .config import ConfigError, load_config
from .imageio import write_pfm, write_png
from .metrics import write_curves_csv
from .restore import RunStats

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

ENV_THREADS = "DIFFRESTORE_THREADS"
ENV_OUT = "DIFFRESTORE_OUT"

log = logging.getLogger("diffrestore")


class NumericError(RuntimeError):
    """A NaN or infinity reached an output."""


def _check_finite(what, values):
    if not np.all(np.isfinite(np.asarray(values, dtype=np.float64))):
        raise NumericError(f"non-finite values in {what}")


def _settings(args, cfg):
    threads = args.threads
    if threads is None and os.environ.get(ENV_THREADS):
        raw = os.environ[ENV_THREADS]
        try:
            threads = int(raw)
        except ValueError:
            raise ConfigError(f"{ENV_THREADS}={raw!r} is not an integer") from None
    threads = cfg.threads if threads is None else threads
    if threads < 1:
        raise ConfigError(f"thread count must be >= 1, got {threads}")
    out = args.out or os.environ.get(ENV_OUT) or cfg.out
    return threads, out


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _fmt(v):
    return repr(float(v))


def cmd_render(args, cfg):
    threads, out = _settings(args, cfg)
    image, stats = experiment.render(cfg, threads=threads, seed=args.seed)
    _check_finite("the rendered image", image)
    os.makedirs(out, exist_ok=True)
    write_pfm(os.path.join(out, "image.pfm"), image)
    write_png(os.path.join(out, "image.png"), image, exposure=cfg.exposure)
    _write_csv(os.path.join(out, "stats.csv"), RunStats.CSV_COLUMNS, [stats.csv_row()])
    print(f"{stats.method}: {stats.steps} steps, {stats.tours} tours, mean tour {stats.mean_tour_len:.2f}, "
          f"kill fraction {stats.kill_frac:.4f}, image mean {image.mean():.6g}, {stats.wall_ms:.0f} ms -> {out}")
    return EXIT_OK


def cmd_bench(args, cfg):
    threads, out = _settings(args, cfg)
    seeds = None if args.seed is None else (args.seed,)
    rows, summary, ref = experiment.bench(cfg, threads=threads, seeds=seeds)
    _check_finite("the benchmark errors", [astuple(r)[3:] for r in rows])
    os.makedirs(out, exist_ok=True)
    write_curves_csv(os.path.join(out, "curves.csv"), rows)
    _write_csv(os.path.join(out, "summary.csv"), experiment.SummaryRow.COLUMNS,
               [[s.method, s.budget, s.seeds] + [_fmt(v) for v in astuple(s)[3:]] for s in summary])
    write_pfm(os.path.join(out, "reference.pfm"), ref)
    print(f"{'method':<20}{'budget':>10}{'seeds':>6}{'MAE':>12}{'MSE':>12}{'MRSE':>12}{'MAPE':>12}")
    for s in summary:
        print(f"{s.method:<20}{s.budget:>10}{s.seeds:>6}{s.median_mae:>12.4e}{s.median_mse:>12.4e}"
              f"{s.median_mrse:>12.4e}{s.median_mape:>12.4e}")
    print(f"(medians over seeds at the final budget) -> {out}")
    return EXIT_OK


def _dt_tag(dt):
    return f"{dt:.0e}".replace("+", "")


def cmd_bias(args, cfg):
    _, out = _settings(args, cfg)
    res = experiment.bias(cfg)
    for f in res.fields:
        _check_finite("a bias field", f.values)
    os.makedirs(out, exist_ok=True)
    for dt, f in zip(res.dts, res.fields):
        f.to_csv(os.path.join(out, f"bias_dt{_dt_tag(dt)}.csv"))
        f.to_png(os.path.join(out, f"bias_dt{_dt_tag(dt)}.png"))
    _write_csv(os.path.join(out, "sweep.csv"), ("dt", "sup_norm", "implied_pixel_bias"),
               [[_fmt(dt), _fmt(s), _fmt(b)] for dt, s, b in zip(res.dts, res.sup_norms, res.implied_bias)])
    _write_csv(os.path.join(out, "slope.csv"), ("metric", "slope", "status"),
               [["sup_norm", "" if res.slope is None else _fmt(res.slope), res.status]])
    for dt, s in zip(res.dts, res.sup_norms):
        print(f"dt={dt:.1e}  sup|bias field|={s:.4e}")
    slope = "degenerate" if res.slope is None else f"{res.slope:.3f}"
    print(f"log-log slope: {slope} -> {out}")
    return EXIT_OK


COMMANDS = {"render": cmd_render, "bench": cmd_bench, "bias": cmd_bias}


def build_parser():
    parser = argparse.ArgumentParser(prog="diffrestore", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "render": "run one method and write image.pfm, image.png and stats.csv",
        "bench": "run every (method, budget, seed) against a reference and write curves.csv",
        "bias": "sweep the adjoint bias field over step sizes and fit its decay slope",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("config", help="experiment config (TOML)")
        p.add_argument("--threads", type=int, default=None, help=f"worker threads (env {ENV_THREADS})")
        p.add_argument("--out", default=None, help=f"output directory (env {ENV_OUT})")
        p.add_argument("--seed", type=int, default=None, help="override the config seed(s)")
    return parser


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None and not 0 <= args.seed < 2 ** 32:
            raise ConfigError(f"--seed must lie in [0, 2^32), got {args.seed}")
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except NumericError as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
