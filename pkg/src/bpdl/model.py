"""Model parameters, rate fields and populations."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _engine
from .domain import SpatialDomain
from .errors import BadKernel, EnvelopeViolated, NegativeRate
from .kernels import Kernel

MASS_TOL = 1e-6


class RateField:
    """Nonnegative rate on space, stored as a piecewise-constant grid.

    A constant is a 1-cell grid.  Callables are tabulated at cell centres of
    a window; outside the window the nearest edge cell is used.
    """

    def __init__(self, values, lo=None, h=None):
        values = np.asarray(values, dtype=float)
        if values.ndim == 0:
            values = values.reshape(1)
        self.values = values
        d = values.ndim
        self.lo = np.zeros(d) if lo is None else np.asarray(lo, dtype=float).reshape(d)
        self.h = np.ones(d) if h is None else np.asarray(h, dtype=float).reshape(d)
        self._enc = np.concatenate([[d], values.shape, self.lo, self.h, values.ravel()]).astype(float)

    @classmethod
    def constant(cls, c: float, d: int = 1) -> "RateField":
        return cls(np.full((1,) * d, float(c)))

    @classmethod
    def from_callable(cls, f: Callable, lo, hi, n: int = 512) -> "RateField":
        """Tabulate ``f(x)`` (x of shape ``(m, d)``) at ``n`` cells per axis."""
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        d = len(lo)
        h = (hi - lo) / n
        axes = [lo[k] + h[k] * (np.arange(n) + 0.5) for k in range(d)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        vals = np.asarray(f(mesh), dtype=float).reshape((n,) * d)
        return cls(vals, lo, h)

    @property
    def d(self) -> int:
        return self.values.ndim

    @property
    def is_constant(self) -> bool:
        return bool(np.all(self.values == self.values.flat[0]))

    @property
    def sup(self) -> float:
        return float(self.values.max())

    @property
    def inf(self) -> float:
        return float(self.values.min())

    def encode(self) -> np.ndarray:
        return self._enc

    def __call__(self, x) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0 or (x.ndim == 1 and self.d > 1)
        x2 = x.reshape(-1, self.d)
        idx = []
        for k in range(self.d):
            n = self.values.shape[k]
            c = np.floor((x2[:, k] - self.lo[k]) / self.h[k]).astype(int)
            idx.append(np.clip(c, 0, n - 1))
        out = self.values[tuple(idx)]
        return float(out[0]) if scalar else out

    def to_dict(self):
        if self.values.size == 1:
            return float(self.values.flat[0])
        return {"grid": self.values.tolist(), "lo": self.lo.tolist(), "h": self.h.tolist()}


def as_field(value, d: int, window=None, n: int = 512) -> RateField:
    if isinstance(value, RateField):
        return value
    if callable(value):
        if window is None:
            raise ValueError("a window is needed to tabulate a rate function on unbounded space")
        return RateField.from_callable(value, window[0], window[1], n)
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return RateField.constant(float(arr), d)
    raise ValueError("rate must be a number, a callable or a RateField")


@dataclass
class ModelParams:
    """Validated model ingredients.

    ``D_env`` with constant ``C`` dominates the dispersal kernel:
    ``D(z) <= C * D_env(z)``.  ``gamma_bar, mu_bar, alpha_bar, U_bar`` are
    upper bounds of the corresponding functions.
    """

    gamma: RateField
    mu: RateField
    alpha: RateField
    U: Kernel
    D: Kernel
    D_env: Kernel
    C: float
    gamma_bar: float
    mu_bar: float
    alpha_bar: float
    U_bar: float
    domain: SpatialDomain
    extra: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.domain.d

    @property
    def constant_rates(self) -> bool:
        return self.gamma.is_constant and self.mu.is_constant and self.alpha.is_constant

    @property
    def c0(self) -> float:
        """Homogeneous equilibrium ``(gamma - mu) / alpha`` for constant rates."""
        if not self.constant_rates:
            raise ValueError("c0 is defined for constant rates only")
        g, m, a = self.gamma.sup, self.mu.sup, self.alpha.sup
        return (g - m) / a

    def bars(self) -> np.ndarray:
        return np.array([self.gamma_bar, self.mu_bar, self.alpha_bar, self.U_bar, self.C])

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma.to_dict(),
            "mu": self.mu.to_dict(),
            "alpha": self.alpha.to_dict(),
            "U": self.U.to_dict(),
            "D": self.D.to_dict(),
            "D_env": self.D_env.to_dict(),
            "C": self.C,
            "bounds": {"gamma": self.gamma_bar, "mu": self.mu_bar, "alpha": self.alpha_bar, "U": self.U_bar},
            "domain": self.domain.to_dict(),
        }


def _probe_points(D: Kernel, Dt: Kernel, rng: np.random.Generator, n: int = 10_000) -> np.ndarray:
    d = D.d
    if D.atomic or Dt.atomic:
        if d == 1:
            return np.array([[-1.0], [0.0], [1.0]])
        e = np.eye(d)
        return np.vstack([np.zeros((1, d)), e, -e])
    R = max(D.support_radius, Dt.support_radius)
    if not np.isfinite(R):
        sds = [np.sqrt(k.params[0]) for k in (D, Dt) if k.shape == "gaussian"]
        R = 10 * max(sds)
    radial = np.linspace(0.0, 1.1 * R, 2001)
    edges = []
    for k in (D, Dt):
        if k.shape in ("tophat", "annulus"):
            for p in k.params:
                edges += [p * (1 - 1e-9), p, p * (1 + 1e-9)]
        elif k.shape == "tabulated":
            edges += list(k.params[0])
    radial = np.concatenate([radial, edges])
    line = np.zeros((len(radial), d))
    line[:, 0] = radial
    cloud = rng.uniform(-1.1 * R, 1.1 * R, size=(n, d))
    return np.vstack([line, -line, cloud])


def make_params(gamma, mu, alpha, U: Kernel, D: Kernel, D_env: Kernel | None = None, C: float = 1.0,
                domain: SpatialDomain | None = None, gamma_bar=None, mu_bar=None, alpha_bar=None,
                U_bar=None, seed: int = 0, window=None, grid_n: int = 512, **extra) -> ModelParams:
    """Validate model ingredients and build :class:`ModelParams`.

    Rates may be numbers, callables (tabulated on ``window`` or the domain)
    or :class:`RateField` objects.  Declared bounds looser than the true
    suprema are tightened; bounds below them raise ``EnvelopeViolated``.

    Raises
    ------
    NegativeRate
        A rate field takes a negative value.
    BadKernel
        ``D`` or ``D_env`` does not integrate to one, or dimensions disagree.
    EnvelopeViolated
        ``D > C * D_env`` somewhere, or a declared bound is below a supremum.
    """
    domain = domain or SpatialDomain("unbounded", U.d)
    d = domain.d
    for name, k in (("U", U), ("D", D), ("D_env", D_env)):
        if k is not None and k.d != d:
            raise BadKernel(f"kernel {name} has dimension {k.d}, domain has {d}")
    win = window if window is not None else domain.window()
    fields = {}
    for name, v in (("gamma", gamma), ("mu", mu), ("alpha", alpha)):
        f = as_field(v, d, win, grid_n)
        if f.d != d:
            raise ValueError(f"rate {name} has dimension {f.d}, domain has {d}")
        if f.inf < 0 or not np.all(np.isfinite(f.values)):
            raise NegativeRate(f"rate {name} takes the value {f.inf:g}")
        fields[name] = f

    if domain.mode == "lattice":
        if d > 2:
            raise BadKernel("lattice mode supports d <= 2")
        if not (U.atomic and D.atomic):
            raise BadKernel("lattice mode needs atomic kernels (pointwise / lattice_nn)")
    elif U.atomic or D.atomic:
        raise BadKernel("atomic kernels are only meaningful on a lattice")

    for name, k in (("D", D), ("D_env", D_env)):
        if k is None:
            continue
        m = k.numeric_mass()
        if abs(m - 1.0) > MASS_TOL:
            raise BadKernel(f"dispersal kernel {name} has mass {m:.8g}, expected 1")

    same_env = D_env is None or D_env.shape == D.shape and np.array_equal(D_env.encode(), D.encode())
    if D_env is None:
        D_env = D
    if C <= 0:
        raise EnvelopeViolated("envelope constant C must be positive")
    rng = np.random.default_rng(seed)
    if same_env:
        if C < 1.0:
            raise EnvelopeViolated(f"C = {C:g} < 1 with D_env = D")
        C = 1.0
    else:
        z = _probe_points(D, D_env, rng)
        dv, ev = D(z), D_env(z)
        bad = dv > C * ev * (1 + 1e-12)
        if np.any(bad):
            k = int(np.argmax(bad))
            raise EnvelopeViolated(f"D(z) = {dv[k]:.6g} > C*D_env(z) = {C * ev[k]:.6g} at z = {z[k]}")

    sups = {"gamma": fields["gamma"].sup, "mu": fields["mu"].sup, "alpha": fields["alpha"].sup, "U": U.sup}
    declared = {"gamma": gamma_bar, "mu": mu_bar, "alpha": alpha_bar, "U": U_bar}
    bounds = {}
    for name, s in sups.items():
        b = declared[name]
        if b is not None and b < s * (1 - 1e-12):
            raise EnvelopeViolated(f"declared bound for {name} ({b:g}) is below its supremum ({s:g})")
        bounds[name] = s
    return ModelParams(
        fields["gamma"], fields["mu"], fields["alpha"], U, D, D_env, float(C),
        bounds["gamma"], bounds["mu"], bounds["alpha"], bounds["U"], domain, dict(extra),
    )


class Population:
    """Finite configuration of individuals in R^d (positions are an ``(n, d)`` array)."""

    def __init__(self, positions, ids=None):
        pos = np.asarray(positions, dtype=float)
        if pos.ndim == 1:
            pos = pos.reshape(-1, 1)
        self.positions = pos
        self.ids = np.arange(len(pos), dtype=np.int64) if ids is None else np.asarray(ids, dtype=np.int64)

    def __len__(self):
        return len(self.positions)

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    def copy(self) -> "Population":
        return Population(self.positions.copy(), self.ids.copy())

    def count_in(self, lo, hi) -> int:
        lo = np.atleast_1d(lo)
        hi = np.atleast_1d(hi)
        m = np.all((self.positions >= lo) & (self.positions <= hi), axis=1)
        return int(m.sum())

    def competition_sums(self, params: ModelParams) -> np.ndarray:
        """``S_i = sum_j U(x_i, x_j)`` (self term included), by brute force."""
        return _engine.competition_sums_brute(
            np.ascontiguousarray(self.positions), len(self), params.domain.encode(), params.U.encode()
        )

    def __repr__(self):
        return f"Population(n={len(self)}, d={self.d})"


def competition_sum(pop: Population, x, params: ModelParams) -> float:
    """``sum_j U(x, x_j)`` over the population (a direct O(N) sum)."""
    x = np.asarray(x, dtype=float).reshape(params.d)
    return float(_engine.competition_sum_at(
        np.ascontiguousarray(pop.positions).reshape(-1, params.d), len(pop), x,
        params.domain.encode(), params.U.encode(),
    ))


class _Lost:
    def __repr__(self):
        return "LOST"

    def __bool__(self):
        return False


LOST = _Lost()


def sample_dispersal(params: ModelParams, x, stream, size: int | None = None):
    """Seed location(s) for a parent at ``x``, drawn by thinning the envelope.

    Returns a position (``LOST`` if the seed leaves a box domain).  With
    ``size`` given, returns ``(positions, inside_mask)``.
    """
    x = np.asarray(x, dtype=float).reshape(params.d)
    m = 1 if size is None else int(size)
    out = np.empty((m, params.d))
    ok = np.empty(m, dtype=np.bool_)
    tries = _engine.disperse_many(params.D.encode(), params.D_env.encode(), params.C,
                                  params.domain.encode(), x, stream.state, m, out, ok)
    if tries < 0:
        raise EnvelopeViolated("dispersal thinning did not accept a proposal")
    if size is None:
        return out[0] if ok[0] else LOST
    return out, ok


def poisson_configuration(window, intensity: float, rng) -> Population:
    """Homogeneous Poisson configuration on a box or periodic domain.

    ``window`` is a :class:`SpatialDomain` or a ``(lo, hi)`` pair;
    ``rng`` is a numpy Generator or a :class:`~bpdl.rng.Stream`.
    """
    gen = getattr(rng, "np", rng)
    if isinstance(window, SpatialDomain):
        lo, hi = window.window()
    else:
        lo, hi = (np.atleast_1d(np.asarray(a, dtype=float)) for a in window)
    vol = float(np.prod(hi - lo))
    n = gen.poisson(intensity * vol)
    pos = lo + (hi - lo) * gen.random((n, len(lo)))
    return Population(pos)
