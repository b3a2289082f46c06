"""YAML run configuration: loading with line tracking and builders for model
ingredients, initial conditions and schedules."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .domain import SpatialDomain
from .errors import BadConfig, BPDLError
from .kernels import Kernel
from .model import ModelParams, Population, RateField, make_params, poisson_configuration
from .rng import Stream
from .testfunctions import TestFunction

_MISSING = object()


def _line_map(node, prefix="", out=None) -> dict:
    """Key path -> 1-based line number for every mapping key and sequence item."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = f"{prefix}.{k.value}" if prefix else str(k.value)
            out[path] = k.start_mark.line + 1
            _line_map(v, path, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            path = f"{prefix}[{i}]"
            out[path] = v.start_mark.line + 1
            _line_map(v, path, out)
    return out


class Config:
    """Parsed configuration with the source line of every key.

    Values are looked up by dotted path (``"model.U.radius"``).  Errors raised
    through :meth:`fail` carry the path and line.
    """

    def __init__(self, data: dict, lines: dict | None = None, source: str = "<config>", text: str = ""):
        self.data = data if data is not None else {}
        self.lines = lines or {}
        self.source = source
        self.text = text

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "Config":
        try:
            node = yaml.compose(text, Loader=yaml.SafeLoader)
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            raise BadConfig(f"cannot parse {source}: {getattr(exc, 'problem', exc)}",
                            line=mark.line + 1 if mark else None) from None
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise BadConfig(f"{source} must contain a mapping at top level", line=1)
        return cls(data, _line_map(node) if node is not None else {}, source, text)

    @classmethod
    def from_file(cls, path) -> "Config":
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise BadConfig(f"cannot read config file {p}: {exc.strerror}") from None
        return cls.from_text(text, str(p))

    def line(self, path: str) -> int | None:
        while path:
            if path in self.lines:
                return self.lines[path]
            path = path.rpartition(".")[0]
        return None

    def fail(self, message: str, path: str):
        raise BadConfig(message, field=path, line=self.line(path))

    def has(self, path: str) -> bool:
        return self.get(path, None) is not None

    def get(self, path: str, default=_MISSING):
        node = self.data
        for part in path.split("."):
            if isinstance(node, dict) and part in node:
                node = node[part]
            else:
                if default is _MISSING:
                    self.fail("missing required field", path)
                return default
        return node

    def number(self, path: str, default=_MISSING, positive=False, nonneg=False) -> float:
        v = self.get(path, default)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(f"expected a number, got {v!r}", path)
        v = float(v)
        if not np.isfinite(v):
            self.fail("value must be finite", path)
        if positive and v <= 0:
            self.fail("value must be positive", path)
        if nonneg and v < 0:
            self.fail("value must be nonnegative", path)
        return v

    def integer(self, path: str, default=_MISSING, minimum: int | None = None) -> int:
        v = self.get(path, default)
        if isinstance(v, bool) or not (isinstance(v, int) or (isinstance(v, float) and v.is_integer())):
            self.fail(f"expected an integer, got {v!r}", path)
        v = int(v)
        if minimum is not None and v < minimum:
            self.fail(f"value must be at least {minimum}", path)
        return v

    def numbers(self, path: str, default=_MISSING, length: int | None = None) -> list:
        v = self.get(path, default)
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            v = [v]
        if not isinstance(v, list) or not all(isinstance(a, (int, float)) and not isinstance(a, bool) for a in v):
            self.fail(f"expected a list of numbers, got {v!r}", path)
        if length is not None and len(v) != length:
            self.fail(f"expected {length} numbers, got {len(v)}", path)
        return [float(a) for a in v]

    def choice(self, path: str, options, default=_MISSING) -> str:
        v = self.get(path, default)
        if v not in options:
            self.fail(f"expected one of {', '.join(map(str, options))}, got {v!r}", path)
        return v

    def flag(self, path: str, default=_MISSING) -> bool:
        v = self.get(path, default)
        if not isinstance(v, bool):
            self.fail(f"expected true or false, got {v!r}", path)
        return v

    def section(self, path: str, default=_MISSING) -> dict:
        v = self.get(path, default)
        if not isinstance(v, dict):
            self.fail("expected a mapping", path)
        return v


# ---------------------------------------------------------------------------
# presets


def preset_names() -> list[str]:
    root = resources.files("bpdl") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_preset(name: str) -> Config:
    root = resources.files("bpdl") / "presets"
    f = root / f"{name}.yaml"
    if not f.is_file():
        raise BadConfig(f"unknown preset {name!r}; available: {', '.join(preset_names())}", field="preset")
    return Config.from_text(f.read_text(), f"preset {name}")


# ---------------------------------------------------------------------------
# model ingredients


def build_domain(cfg: Config, path: str = "model.domain") -> SpatialDomain:
    kind = cfg.choice(f"{path}.kind", ("unbounded", "torus", "box", "lattice"))
    d = cfg.integer(f"{path}.d", 1, minimum=1)
    try:
        if kind in ("torus", "lattice"):
            side = cfg.numbers(f"{path}.side")
            return SpatialDomain(kind, d, side=tuple(side))
        if kind == "box":
            b = cfg.get(f"{path}.bounds")
            if not isinstance(b, list) or not b:
                cfg.fail("expected a list of [lo, hi] pairs", f"{path}.bounds")
            if isinstance(b[0], (int, float)):
                b = [b]
            return SpatialDomain("box", d, bounds=tuple(tuple(ab) for ab in b))
    except (ValueError, TypeError) as exc:
        cfg.fail(str(exc), path)
    return SpatialDomain("unbounded", d)


def build_kernel(cfg: Config, path: str, d: int) -> Kernel:
    cfg.section(path)
    shape = cfg.choice(f"{path}.shape", ("tophat", "indicator", "annulus", "gaussian", "lattice_nn", "pointwise",
                                         "tabulated"))
    mass = cfg.number(f"{path}.mass", 1.0, nonneg=True)
    try:
        if shape == "tophat":
            return Kernel.tophat(cfg.number(f"{path}.radius", positive=True), mass, d)
        if shape == "indicator":
            return Kernel.indicator(cfg.number(f"{path}.radius", positive=True),
                                    cfg.number(f"{path}.height", 1.0, nonneg=True), d)
        if shape == "annulus":
            return Kernel.annulus(cfg.number(f"{path}.a", nonneg=True), cfg.number(f"{path}.b", positive=True),
                                  mass, d)
        if shape == "gaussian":
            return Kernel.gaussian(cfg.number(f"{path}.variance", positive=True), mass, d)
        if shape == "tabulated":
            return Kernel("tabulated", (cfg.numbers(f"{path}.r"), cfg.numbers(f"{path}.values")), mass, d)
        return Kernel(shape, (), mass, d)
    except BadConfig:
        raise
    except (BPDLError, ValueError) as exc:
        cfg.fail(str(exc), path)


class CosineRate:
    """``base + amplitude * cos(2 pi x_1 / period)`` (picklable)."""

    def __init__(self, base: float, amplitude: float, period: float):
        self.base, self.amplitude, self.period = base, amplitude, period

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.base + self.amplitude * np.cos(2 * np.pi * x[..., 0] / self.period)


def build_rate(cfg: Config, path: str, d: int, window=None):
    """A number, ``{cosine: {base, amplitude, period}, cells}`` or ``{table: [...], lo, hi}`` (d = 1)."""
    v = cfg.get(path)
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return cfg.number(path, nonneg=True)
    if not isinstance(v, dict):
        cfg.fail("rate must be a number or a mapping", path)
    if "cosine" in v:
        p = f"{path}.cosine"
        f = CosineRate(cfg.number(f"{p}.base"), cfg.number(f"{p}.amplitude", 0.0),
                       cfg.number(f"{p}.period", positive=True))
        lo = cfg.numbers(f"{path}.lo", None) or (list(window[0]) if window is not None else None)
        hi = cfg.numbers(f"{path}.hi", None) or (list(window[1]) if window is not None else None)
        if lo is None or hi is None:
            cfg.fail("a cosine rate on unbounded space needs lo and hi", path)
        return RateField.from_callable(f, lo, hi, cfg.integer(f"{path}.cells", 256, minimum=1))
    if "table" in v:
        vals = cfg.numbers(f"{path}.table")
        lo, hi = cfg.number(f"{path}.lo"), cfg.number(f"{path}.hi")
        if hi <= lo or d != 1:
            cfg.fail("table rates need d = 1 and lo < hi", path)
        return RateField(np.array(vals), [lo], [(hi - lo) / len(vals)])
    cfg.fail("rate mapping needs a 'cosine' or 'table' entry", path)


def build_params(cfg: Config, path: str = "model") -> ModelParams:
    cfg.section(path)
    dom = build_domain(cfg, f"{path}.domain") if cfg.has(f"{path}.domain") else SpatialDomain("unbounded", 1)
    d = dom.d
    win = dom.window()
    rates = {k: build_rate(cfg, f"{path}.{k}", d, win) for k in ("gamma", "mu", "alpha")}
    U = build_kernel(cfg, f"{path}.U", d)
    D = build_kernel(cfg, f"{path}.D", d)
    Denv = build_kernel(cfg, f"{path}.D_env", d) if cfg.has(f"{path}.D_env") else None
    try:
        return make_params(rates["gamma"], rates["mu"], rates["alpha"], U, D, Denv,
                           C=cfg.number(f"{path}.C", 1.0, positive=True), domain=dom)
    except BPDLError as exc:
        cfg.fail(str(exc), path)


# ---------------------------------------------------------------------------
# initial conditions


class PoissonInitial:
    """Fresh Poisson configuration on a window for every replicate."""

    def __init__(self, lo, hi, intensity: float):
        self.lo, self.hi, self.intensity = np.asarray(lo, float), np.asarray(hi, float), float(intensity)

    def __call__(self, stream: Stream) -> Population:
        return poisson_configuration((self.lo, self.hi), self.intensity, stream)


class UniformInitial:
    """``count`` i.i.d. uniform points on a window."""

    def __init__(self, lo, hi, count: int):
        self.lo, self.hi, self.count = np.asarray(lo, float), np.asarray(hi, float), int(count)

    def __call__(self, stream: Stream) -> Population:
        u = stream.np.random((self.count, len(self.lo)))
        return Population(self.lo + u * (self.hi - self.lo))


def build_initial(cfg: Config, d: int, path: str = "initial"):
    """``atoms`` (count copies of one point), ``points``, ``poisson`` or ``uniform``."""
    kind = cfg.choice(f"{path}.kind", ("atoms", "points", "poisson", "uniform"))
    if kind == "atoms":
        at = cfg.numbers(f"{path}.at", [0.0] * d, length=d)
        n = cfg.integer(f"{path}.count", 1, minimum=0)
        return Population(np.tile(np.array(at), (n, 1)))
    if kind == "points":
        pts = cfg.get(f"{path}.positions")
        try:
            x = np.asarray(pts, dtype=float).reshape(-1, d)
        except (ValueError, TypeError):
            cfg.fail(f"expected a list of {d}-dimensional points", f"{path}.positions")
        return Population(x)
    lo = cfg.numbers(f"{path}.lo", length=d)
    hi = cfg.numbers(f"{path}.hi", length=d)
    if any(b <= a for a, b in zip(lo, hi)):
        cfg.fail("window needs lo < hi", path)
    if kind == "poisson":
        return PoissonInitial(lo, hi, cfg.number(f"{path}.intensity", nonneg=True))
    return UniformInitial(lo, hi, cfg.integer(f"{path}.count", minimum=0))


# ---------------------------------------------------------------------------
# schedules and test functions


def build_times(cfg: Config, path: str, T: float | None = None) -> tuple:
    """Snapshot times: a list, or ``{every: dt}`` on ``[0, T]``."""
    v = cfg.get(path, None)
    if v is None:
        return ()
    if isinstance(v, dict):
        dt = cfg.number(f"{path}.every", positive=True)
        end = cfg.number(f"{path}.until", T if T is not None else _MISSING, positive=True)
        start = cfg.number(f"{path}.from", 0.0, nonneg=True)
        k = int(np.floor((end - start) / dt + 1e-9))
        return tuple(np.round(start + dt * np.arange(k + 1), 12))
    return tuple(sorted(cfg.numbers(path)))


def build_test_function(cfg: Config, path: str) -> TestFunction:
    kind = cfg.choice(f"{path}.kind", ("constant", "indicator", "triangle", "cosine"))
    c = cfg.number(f"{path}.scale", 1.0)
    if kind == "constant":
        return TestFunction.constant(c)
    if kind == "indicator":
        return TestFunction.indicator(cfg.numbers(f"{path}.lo"), cfg.numbers(f"{path}.hi"), c)
    if kind == "triangle":
        return TestFunction.triangle(cfg.numbers(f"{path}.center", [0.0]), cfg.number(f"{path}.halfwidth", 1.0,
                                                                                       positive=True), c)
    return TestFunction.cosine(cfg.number(f"{path}.period", positive=True), cfg.integer(f"{path}.k", 1), c)


def build_test_functions(cfg: Config, path: str, default=None) -> dict:
    v = cfg.get(path, None)
    if v is None:
        return dict(default or {"one": TestFunction.constant(1.0)})
    if not isinstance(v, dict) or not v:
        cfg.fail("expected a mapping of label -> test function", path)
    return {str(k): build_test_function(cfg, f"{path}.{k}") for k in v}
