"""Experiment configs: strict TOML with a schema version.

Layout (every table is optional unless the subcommand needs it)::

    schema = 1
    seed = 7
    threads = 1
    out = "out/mixture"
    exposure = 1.0

    [target]            # kind = "uniform" | "mixture" | "scene"
    [method]            # render: one method
    [bench]             # bench: budgets, seeds, reference, [[bench.methods]]
    [bias]              # bias: sigma, c, dts, grid_n, ...

Unknown keys, wrong types and out-of-range values raise :class:`ConfigError`
naming the file, the line (when it can be located) and the dotted field.
"""

import dataclasses
import math
import re
import sys
from dataclasses import dataclass

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - depends on the interpreter
    import tomli as tomllib

from .dynamics import LangevinConfig, MALAConfig, MetropolisConfig
from .microrender import PRESETS
from .restore import HOLDING_MODES, RestoreConfig
from .targets import UniformTarget, WrappedGaussianMixture

SCHEMA_VERSION = 1

METHODS = ("pt", "metropolis", "mala", "metropolis-restore", "mala-restore", "diffusion-restore")
TARGET_KINDS = ("uniform", "mixture", "scene")
REFERENCES = ("auto", "quadrature", "pt")


class ConfigError(ValueError):
    """Invalid experiment config; ``str()`` is a user-facing diagnostic."""


# --------------------------------------------------------------- sections


@dataclass(frozen=True)
class TargetSpec:
    kind: str
    width: int = 32
    height: int = 32
    dim: int = 2
    weights: tuple = ()
    means: tuple = ()
    stddevs: tuple = ()
    truncation: int = 5
    clip: float = 0.0
    preset: str = ""
    depth: int = 2
    albedo: float = 0.5
    emission: float = 1.0

    def build(self):
        if self.kind == "uniform":
            return UniformTarget(self.dim, self.width, self.height)
        if self.kind == "mixture":
            return WrappedGaussianMixture(self.weights, self.means, self.stddevs, self.truncation,
                                          self.clip, self.width, self.height)
        if self.preset == "furnace":
            return PRESETS["furnace"](self.albedo, self.emission, self.width, self.height, self.depth)
        return PRESETS[self.preset](width=self.width, height=self.height, depth=self.depth)


@dataclass(frozen=True)
class MethodSpec:
    """One sampler with its parameters; ``None`` fields take method defaults."""

    name: str
    budget: int = 1 << 20
    stddev: float = None
    c_tilde: float = None
    dt: float = 1e-5
    m: float = 64.0
    large_step_prob: float = None
    kappa0: float = None
    dispatch_count: int = 1024
    chains: int = 1024
    holding: str = None

    def dynamics(self):
        base = self.name.replace("-restore", "")
        restore = self.name.endswith("-restore")
        large = self.large_step_prob
        if large is None:
            large = 0.0 if restore else 0.3
        if base == "diffusion":
            stddev = 5e-3 if self.stddev is None else self.stddev
            c_tilde = stddev * stddev if self.c_tilde is None else self.c_tilde
            return LangevinConfig(stddev=stddev, c_tilde=c_tilde, dt=self.dt)
        if base == "metropolis":
            return MetropolisConfig(stddev=1e-2 if self.stddev is None else self.stddev, large_step_prob=large)
        if base == "mala":
            return MALAConfig(stddev=5e-3 if self.stddev is None else self.stddev, large_step_prob=large)
        return None

    def restore_config(self):
        holding = self.holding
        if holding is None:
            holding = "embedded" if self.name == "diffusion-restore" else "unit"
        return RestoreConfig(m=self.m, kappa0=self.kappa0, dt=self.dt, dispatch_count=self.dispatch_count,
                             holding=holding)

    def with_budget(self, budget):
        return dataclasses.replace(self, budget=int(budget))


@dataclass(frozen=True)
class BenchSpec:
    methods: tuple
    budgets: tuple
    seeds: tuple
    reference: str = "auto"
    reference_spp: int = 1 << 14
    reference_seed: int = 1 << 20


@dataclass(frozen=True)
class BiasSpec:
    dts: tuple
    sigma: float = 0.1
    c: float = 0.01
    grid_n: int = 64
    m: float = 64.0


@dataclass(frozen=True)
class ExperimentConfig:
    path: str
    target: TargetSpec
    seed: int = 0
    threads: int = 1
    out: str = "out"
    exposure: float = 1.0
    method: MethodSpec = None
    bench: BenchSpec = None
    bias: BiasSpec = None
    schema: int = SCHEMA_VERSION

    def require(self, section):
        if getattr(self, section) is None:
            raise ConfigError(f"{self.path}: missing required table [{section}]")
        return getattr(self, section)


# ---------------------------------------------------------------- parsing


class _Reader:
    """Validates one TOML table; tracks the dotted path and source lines."""

    def __init__(self, path, text, table, where):
        self.path = path
        self.text = text
        self.table = table
        self.where = where
        self.used = set()

    def _section_start(self):
        """Offset of this table's header (the i-th one for ``name[i]`` array entries)."""
        if not self.where:
            return 0
        m = re.fullmatch(r"(.*)\[(\d+)\]", self.where)
        name, index = (m.group(1), int(m.group(2))) if m else (self.where, 0)
        headers = list(re.finditer(rf"^\s*\[\[?\s*{re.escape(name)}\s*\]\]?", self.text, re.M))
        return headers[index].end() if index < len(headers) else None

    def _line(self, key):
        start = self._section_start()
        if start is None:
            return None
        pat = re.compile(rf"^\s*{re.escape(key)}\s*=", re.M)
        m = pat.search(self.text, start)
        return self.text.count("\n", 0, m.start()) + 1 if m else None

    def error(self, key, msg):
        name = f"{self.where}.{key}" if self.where else key
        line = self._line(key) if key else None
        loc = f"{self.path}:{line}" if line else self.path
        raise ConfigError(f"{loc}: {name}: {msg}")

    def get(self, key, kind, default=dataclasses.MISSING, check=None, what=""):
        self.used.add(key)
        if key not in self.table:
            if default is dataclasses.MISSING:
                self.error(key, "required field is missing")
            return default
        value = self.table[key]
        value = self._coerce(key, value, kind)
        if check is not None and not check(value):
            self.error(key, f"must be {what}, got {value!r}")
        return value

    def _coerce(self, key, value, kind):
        if kind is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                self.error(key, f"expected a number, got {type(value).__name__}")
            if not math.isfinite(value):
                self.error(key, "must be finite")
            return float(value)
        if kind is int:
            if isinstance(value, bool) or not isinstance(value, int):
                self.error(key, f"expected an integer, got {type(value).__name__}")
            return value
        if kind is str:
            if not isinstance(value, str):
                self.error(key, f"expected a string, got {type(value).__name__}")
            return value
        if kind == "floats":
            if not isinstance(value, list) or not value:
                self.error(key, "expected a non-empty list of numbers")
            return tuple(self._coerce(key, v, float) for v in value)
        if kind == "ints":
            if not isinstance(value, list) or not value:
                self.error(key, "expected a non-empty list of integers")
            return tuple(self._coerce(key, v, int) for v in value)
        if kind == "matrix":
            if not isinstance(value, list) or not value or not all(isinstance(r, list) for r in value):
                self.error(key, "expected a non-empty list of number lists")
            return tuple(tuple(self._coerce(key, v, float) for v in row) for row in value)
        if kind == "table":
            if not isinstance(value, dict):
                self.error(key, "expected a table")
            return value
        if kind == "tables":
            if not isinstance(value, list) or not value or not all(isinstance(v, dict) for v in value):
                self.error(key, "expected a non-empty array of tables")
            return value
        raise AssertionError(kind)

    def sub(self, key, table):
        where = f"{self.where}.{key}" if self.where else key
        return _Reader(self.path, self.text, table, where)

    def finish(self):
        unknown = sorted(set(self.table) - self.used)
        if unknown:
            self.error(unknown[0], "unknown key" + (f" (also: {', '.join(unknown[1:])})" if unknown[1:] else ""))


def _positive(v):
    return v > 0


def _read_target(r):
    kind = r.get("kind", str, check=lambda v: v in TARGET_KINDS, what=f"one of {TARGET_KINDS}")
    width = r.get("width", int, 32, _positive, "positive")
    height = r.get("height", int, 32, _positive, "positive")
    spec = dict(kind=kind, width=width, height=height)
    if kind == "uniform":
        spec["dim"] = r.get("dim", int, 2, lambda v: v >= 2 and v % 2 == 0, "an even integer >= 2")
    elif kind == "mixture":
        spec["weights"] = r.get("weights", "floats", check=lambda v: all(x > 0 for x in v), what="positive")
        spec["means"] = r.get("means", "matrix")
        spec["stddevs"] = r.get("stddevs", "floats", check=lambda v: all(x > 0 for x in v), what="positive")
        spec["truncation"] = r.get("truncation", int, 5, lambda v: v >= 0, "nonnegative")
        spec["clip"] = r.get("clip", float, 0.0, lambda v: v >= 0, "nonnegative")
        k = len(spec["weights"])
        if len(spec["means"]) != k or len(spec["stddevs"]) != k:
            r.error("means", "weights, means and stddevs must have the same length")
        if any(len(mu) != 2 for mu in spec["means"]):
            r.error("means", "mixture means must be 2-vectors")
    else:
        spec["preset"] = r.get("preset", str, check=lambda v: v in PRESETS, what=f"one of {tuple(PRESETS)}")
        spec["depth"] = r.get("depth", int, 2, lambda v: v >= 1, ">= 1")
        if spec["preset"] == "furnace":
            spec["albedo"] = r.get("albedo", float, 0.5, lambda v: 0 <= v <= 1, "in [0, 1]")
            spec["emission"] = r.get("emission", float, 1.0, lambda v: v >= 0, "nonnegative")
    r.finish()
    return TargetSpec(**spec)


def _read_method(r, need_budget=True):
    name = r.get("name", str, check=lambda v: v in METHODS, what=f"one of {METHODS}")
    spec = dict(name=name)
    if need_budget:
        spec["budget"] = r.get("budget", int, check=_positive, what="positive")
    if name != "pt":
        spec["stddev"] = r.get("stddev", float, None, _positive, "positive")
        spec["large_step_prob"] = r.get("large_step_prob", float, None, lambda v: 0 <= v <= 1, "in [0, 1]")
    if name in ("metropolis", "mala"):
        spec["chains"] = r.get("chains", int, 1024, _positive, "positive")
    if name.endswith("-restore"):
        spec["m"] = r.get("m", float, 64.0, lambda v: v >= 1, ">= 1")
        spec["dt"] = r.get("dt", float, 1e-5, _positive, "positive")
        spec["kappa0"] = r.get("kappa0", float, None, _positive, "positive")
        spec["dispatch_count"] = r.get("dispatch_count", int, 1024, _positive, "positive")
        spec["holding"] = r.get("holding", str, None, lambda v: v in HOLDING_MODES, f"one of {HOLDING_MODES}")
    if name == "diffusion-restore":
        spec["c_tilde"] = r.get("c_tilde", float, None, lambda v: v >= 0, "nonnegative")
    r.finish()
    return MethodSpec(**spec)


def _ascending(v):
    return all(a < b for a, b in zip(v, v[1:]))


def _read_bench(r):
    budgets = r.get("budgets", "ints", check=lambda v: all(x > 0 for x in v) and _ascending(v),
                    what="positive and strictly ascending")
    seeds = r.get("seeds", "ints", check=lambda v: len(set(v)) == len(v) and all(x >= 0 for x in v),
                  what="distinct nonnegative integers")
    reference = r.get("reference", str, "auto", lambda v: v in REFERENCES, f"one of {REFERENCES}")
    reference_spp = r.get("reference_spp", int, 1 << 14, _positive, "positive")
    reference_seed = r.get("reference_seed", int, 1 << 20, lambda v: v >= 0, "nonnegative")
    tables = r.get("methods", "tables")
    methods = []
    for i, t in enumerate(tables):
        methods.append(_read_method(r.sub(f"methods[{i}]", t), need_budget=False))
    if len(methods) < 2:
        r.error("methods", "a benchmark needs at least two methods")
    r.finish()
    return BenchSpec(tuple(methods), budgets, seeds, reference, reference_spp, reference_seed)


def _read_bias(r):
    dts = r.get("dts", "floats", check=lambda v: all(x > 0 for x in v) and len(v) >= 2,
                what="at least two positive step sizes")
    sigma = r.get("sigma", float, 0.1, _positive, "positive")
    c = r.get("c", float, 0.01, lambda v: v >= 0, "nonnegative")
    grid_n = r.get("grid_n", int, 64, lambda v: v >= 4, ">= 4")
    m = r.get("m", float, 64.0, lambda v: v >= 1, ">= 1")
    r.finish()
    return BiasSpec(tuple(sorted(dts, reverse=True)), sigma, c, grid_n, m)


def parse_config(text, path="<string>"):
    """Parse and validate config text; raises :class:`ConfigError`."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: syntax error: {exc}") from None
    r = _Reader(path, text, raw, "")
    schema = r.get("schema", int)
    if schema != SCHEMA_VERSION:
        r.error("schema", f"unsupported schema version {schema} (this build reads {SCHEMA_VERSION})")
    seed = r.get("seed", int, 0, lambda v: 0 <= v < 2 ** 32, "in [0, 2^32)")
    threads = r.get("threads", int, 1, _positive, "positive")
    out = r.get("out", str, "out")
    exposure = r.get("exposure", float, 1.0, _positive, "positive")
    target = _read_target(r.sub("target", r.get("target", "table")))
    method = bench = bias = None
    if "method" in raw:
        method = _read_method(r.sub("method", r.get("method", "table")))
    if "bench" in raw:
        bench = _read_bench(r.sub("bench", r.get("bench", "table")))
    if "bias" in raw:
        bias = _read_bias(r.sub("bias", r.get("bias", "table")))
    r.finish()
    cfg = ExperimentConfig(path=str(path), target=target, seed=seed, threads=threads, out=out,
                           exposure=exposure, method=method, bench=bench, bias=bias, schema=schema)
    try:
        target.build()
        for m in ([method] if method else []) + list(bench.methods if bench else []):
            m.dynamics()
            m.restore_config()
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return cfg


def load_config(path):
    """Read and parse ``path``; I/O errors propagate as ``OSError``."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_config(text, str(path))
