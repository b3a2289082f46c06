"""Scaling studies: the mean-field limit (competition 1/n) and the accelerated
birth-death regime, checked at finite n."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..domain import SpatialDomain
from ..kernels import Kernel
from ..meanfield import DensityField, integrate, stability_dt
from ..model import ModelParams, Population, make_params
from ..rng import Stream
from ..simulator import FleetSpec, run_replicates
from ..statistics import path_integrals
from ..testfunctions import TestFunction


class FieldSampler:
    """Initial condition: ``count`` i.i.d. points with density proportional to a gridded field.

    Cells are chosen by their mass and the point is uniform inside the cell,
    so the sample law is exactly the piecewise-constant field the solver
    starts from.
    """

    def __init__(self, values, L: float, count: int):
        self.values = np.asarray(values, dtype=float)
        self.L = float(L)
        self.count = int(count)

    def __call__(self, stream: Stream) -> Population:
        g = stream.np if isinstance(stream, Stream) else stream
        v = self.values
        d = v.ndim
        n = v.shape[0]
        h = self.L / n
        p = v.ravel() / v.sum()
        cells = g.choice(p.size, size=self.count, p=p)
        idx = np.stack(np.unravel_index(cells, v.shape), axis=1).reshape(-1, d)
        x = -self.L / 2 + (idx + g.random((self.count, d))) * h
        return Population(x)


def probability_field(shape, n: int, L: float, params: ModelParams) -> DensityField:
    """Grid field proportional to ``shape(points)`` with total mass 1."""
    f = DensityField.from_function(shape, n, L, params)
    return f.with_values(f.values / f.mass())


@dataclass
class ScalingPlan:
    """n ladder and base data for either regime.

    ``C1``: ``gamma_n = gamma``, ``mu_n = mu``, ``alpha_n = alpha / n``.
    ``C2``: ``gamma_n = n gamma + beta``, ``mu_n = n gamma``, ``alpha_n = alpha / n``
    and Gaussian dispersal of variance ``sigma / n``.
    """

    ladder: tuple
    regime: str
    gamma: float
    mu: float
    alpha: float
    U: Kernel
    L: float
    T: float
    replicates: int
    D: Kernel | None = None
    beta: float = 0.0
    sigma: float = 1.0
    xi0: object = None  # callable on (m, d) points; uniform when None
    observables: list = field(default_factory=lambda: [TestFunction.constant(1.0)])
    n_snap: int = 20
    grid_n: int = 512
    d: int = 1

    def __post_init__(self):
        self.ladder = tuple(int(n) for n in self.ladder)
        if any(b <= a for a, b in zip(self.ladder, self.ladder[1:])):
            raise ValueError("the n ladder must be strictly increasing")
        if self.regime not in ("C1", "C2"):
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.regime == "C1" and self.D is None:
            raise ValueError("C1 needs a dispersal kernel D")

    @property
    def domain(self) -> SpatialDomain:
        return SpatialDomain.torus(self.L, self.d)

    def params_for(self, n: int) -> ModelParams:
        if self.regime == "C1":
            return make_params(self.gamma, self.mu, self.alpha / n, self.U, self.D, domain=self.domain)
        D = Kernel.gaussian(self.sigma / n, d=self.d)
        return make_params(n * self.gamma + self.beta, n * self.gamma, self.alpha / n, self.U, D,
                           domain=self.domain)

    def limit_params(self) -> ModelParams:
        return make_params(self.gamma, self.mu, self.alpha, self.U, self.D, domain=self.domain)

    def initial_field(self, params: ModelParams) -> DensityField:
        shape = self.xi0 if self.xi0 is not None else (lambda x: np.ones(len(x)))
        return probability_field(shape, self.grid_n, self.L, params)


# ---------------------------------------------------------------------------
# C1: convergence to the deterministic limit


class _ObservableReducer:
    def __init__(self, fs, times, n):
        self.fs, self.times, self.n = fs, np.asarray(times), n

    def __call__(self, tr):
        out = np.empty((len(self.fs), len(self.times)))
        for k, t in enumerate(self.times):
            x = tr.positions_at(t)
            for a, f in enumerate(self.fs):
                out[a, k] = float(np.sum(f(x))) / self.n if len(x) else 0.0
        tr.positions = None
        return out


@dataclass
class ConvergenceTable:
    ladder: list
    rms: np.ndarray  # (observables, ladder)
    times: np.ndarray
    limit: np.ndarray  # (observables, times)
    replicates: int

    @property
    def strictly_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.rms, axis=1) < 0))

    @property
    def final_over_initial(self) -> np.ndarray:
        return self.rms[:, -1] / self.rms[:, 0]

    def passed(self, max_ratio: float = 0.45) -> bool:
        return self.strictly_decreasing and bool(np.all(self.final_over_initial <= max_ratio))

    def to_dict(self):
        return {"ladder": self.ladder, "rms": self.rms.tolist(), "times": self.times.tolist(),
                "limit": self.limit.tolist(), "replicates": self.replicates,
                "strictly_decreasing": self.strictly_decreasing,
                "final_over_initial": self.final_over_initial.tolist(), "passed": self.passed()}


def scaling_meanfield(plan: ScalingPlan, seed: int = 0, threads: int | None = None, dt: float | None = None):
    """RMS over replicates of ``sup_t |<X^n_t, f> - <xi_t, f>|`` for each n on the ladder."""
    if plan.regime != "C1":
        raise ValueError("scaling_meanfield needs a C1 plan")
    lim = plan.limit_params()
    xi0 = plan.initial_field(lim)
    times = np.linspace(0.0, plan.T, plan.n_snap + 1)
    if dt is None:
        dt = min(0.01, stability_dt(xi0))
        dt = plan.T / np.ceil(plan.T / dt / plan.n_snap) / plan.n_snap
    res = integrate(xi0, plan.T, dt, out_times=times)
    limit = np.array([[snap.integrate_against(f) for _, snap in res.snapshots] for f in plan.observables])
    rms = np.empty((len(plan.observables), len(plan.ladder)))
    for c, n in enumerate(plan.ladder):
        spec = FleetSpec(plan.params_for(n), FieldSampler(xi0.values, plan.L, n), plan.T, seed + c,
                         snapshot_times=tuple(times), keep_positions=True,
                         reducer=_ObservableReducer(plan.observables, times, n))
        traces = run_replicates(spec, plan.replicates, threads)
        vals = np.array([tr.summary for tr in traces])  # (reps, obs, times)
        dev = np.abs(vals - limit[None]).max(axis=2)
        rms[:, c] = np.sqrt((dev**2).mean(axis=0))
    return ConvergenceTable(list(plan.ladder), rms, times, limit, plan.replicates)


# ---------------------------------------------------------------------------
# C2: finite-n bracket and the limiting quadratic variation


class _BracketReducer:
    def __init__(self, fs, params, n, gamma, T):
        self.fs, self.params, self.n, self.gamma, self.T = fs, params, n, gamma, T

    def __call__(self, tr):
        lin = tr.lineage
        n = self.n
        life = np.maximum(0.0, np.minimum(lin.death, self.T) - np.maximum(lin.birth, lin.t0))
        out = []
        for f in self.fs:
            nu_t, nu_0, comp, brk = path_integrals(lin, self.T, self.params, f)
            m = (nu_t - nu_0 - comp) / n
            lim = 2.0 * self.gamma * float(np.sum(life * f(lin.positions) ** 2)) / n
            out.append((m, brk / n**2, lim, nu_t / n))
        return np.array(out)


def _var_se(v: np.ndarray) -> tuple[float, float]:
    """Sample variance and its standard error from the fourth central moment."""
    R = len(v)
    c = v - v.mean()
    var = float(c @ c / (R - 1))
    m4 = float(np.mean(c**4))
    return var, float(np.sqrt(max(m4 - var**2, 0.0) / R))


@dataclass
class BracketReport:
    ladder: list
    finite_ratio: np.ndarray  # (observables, ladder)
    finite_se: np.ndarray
    limit_ratio: np.ndarray
    limit_se: np.ndarray
    mean_m: np.ndarray
    se_m: np.ndarray
    mean_mass: np.ndarray
    intercept: np.ndarray
    intercept_se: np.ndarray
    replicates: int
    check_n: int = 50

    @property
    def finite_ok(self) -> bool:
        k = self.ladder.index(self.check_n) if self.check_n in self.ladder else 0
        return bool(np.all((self.finite_ratio[:, k] >= 0.8) & (self.finite_ratio[:, k] <= 1.2)))

    @property
    def final_ok(self) -> bool:
        r = self.limit_ratio[:, -1]
        return bool(np.all((r >= 0.7) & (r <= 1.3)))

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(np.abs(self.limit_ratio - 1.0), axis=1) <= 0))

    @property
    def trend_ok(self) -> bool:
        """Weighted fit ``ratio = a + b/n`` extrapolates to ``a = 1`` within 3 SE."""
        return bool(np.all(np.abs(self.intercept - 1.0) <= 3 * self.intercept_se))

    @property
    def passed(self) -> bool:
        return self.finite_ok and self.final_ok and self.trend_ok

    def to_dict(self):
        out = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.__dict__.items()}
        out.update(finite_ok=self.finite_ok, final_ok=self.final_ok, monotone=self.monotone,
                   trend_ok=self.trend_ok, passed=self.passed)
        return out


def _fit_intercept(n, r, se):
    X = np.stack([np.ones(len(n)), 1.0 / np.asarray(n, dtype=float)], axis=1)
    w = 1.0 / np.maximum(np.asarray(se), 1e-300) ** 2
    A = X.T @ (w[:, None] * X)
    cov = np.linalg.inv(A)
    beta = cov @ (X.T @ (w * r))
    return float(beta[0]), float(np.sqrt(cov[0, 0]))


def scaling_superprocess(plan: ScalingPlan, seed: int = 0, threads: int | None = None) -> BracketReport:
    """Variance of the compensated ``<X^n_T, f>`` against the finite-n bracket and against
    ``2 gamma int_0^T E<X^n_s, f^2> ds``, for each n on the ladder.

    The compensator and the finite-n bracket are exact along each path (the
    integrands are piecewise constant between events).
    """
    if plan.regime != "C2":
        raise ValueError("scaling_superprocess needs a C2 plan")
    k = len(plan.observables)
    shape = (k, len(plan.ladder))
    fr, fse, lr, lse, mm, sm, mass = (np.empty(shape) for _ in range(7))
    for c, n in enumerate(plan.ladder):
        params = plan.params_for(n)
        xi0 = plan.initial_field(params)
        spec = FleetSpec(params, FieldSampler(xi0.values, plan.L, n), plan.T, seed + c, record_lineage=True,
                         reducer=_BracketReducer(plan.observables, params, n, plan.gamma, plan.T),
                         keep_lineage=False)
        traces = run_replicates(spec, plan.replicates, threads)
        vals = np.array([tr.summary for tr in traces])  # (reps, obs, 4)
        R = len(traces)
        for a in range(k):
            m, brk, lim = vals[:, a, 0], vals[:, a, 1], vals[:, a, 2]
            var, var_se = _var_se(m)
            fr[a, c] = var / brk.mean()
            fse[a, c] = fr[a, c] * np.hypot(var_se / var, brk.std(ddof=1) / np.sqrt(R) / brk.mean())
            lr[a, c] = var / lim.mean()
            lse[a, c] = lr[a, c] * np.hypot(var_se / var, lim.std(ddof=1) / np.sqrt(R) / lim.mean())
            mm[a, c] = m.mean()
            sm[a, c] = m.std(ddof=1) / np.sqrt(R)
            mass[a, c] = vals[:, a, 3].mean()
    icpt = np.empty(k)
    icpt_se = np.empty(k)
    for a in range(k):
        icpt[a], icpt_se[a] = _fit_intercept(plan.ladder, lr[a], lse[a])
    return BracketReport(list(plan.ladder), fr, fse, lr, lse, mm, sm, mass, icpt, icpt_se, plan.replicates)
