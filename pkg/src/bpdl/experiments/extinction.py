"""Extinction studies: subcritical regime, compact domains and the mass bound."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize
from scipy.linalg import expm

from ..model import ModelParams, Population
from ..simulator import FleetSpec, run_replicates


def cube_count(L: float, delta: float, d: int) -> int:
    """Number of cubes of side ``delta / sqrt(d)`` needed to cover a torus of side ``L``.

    Any two points in one such cube are within distance ``delta``.
    """
    return int(np.ceil(L / (delta / np.sqrt(d)) - 1e-12)) ** d


def mass_bound(gamma_minus_mu_sup: float, L_tilde: int, alpha0: float, eps: float) -> float:
    """Largest root ``x0 = ||gamma - mu|| L~ / (alpha0 eps)`` of ``delta x = alpha0 x phi(x)``, ``phi(n) = eps n / L~``."""
    return gamma_minus_mu_sup * L_tilde / (alpha0 * eps)


@dataclass
class BirthDeathChain:
    """Birth-death chain on {0, 1, ...} with rates ``b(n)``, ``d(n)`` truncated at ``n_max``.

    Births out of ``n_max`` are suppressed; choose ``n_max`` far in the tail.
    """

    birth: callable
    death: callable
    n_max: int

    def _subgenerator(self):
        n = np.arange(1, self.n_max + 1, dtype=float)
        B = np.asarray(self.birth(n), dtype=float)
        Dd = np.asarray(self.death(n), dtype=float)
        B[-1] = 0.0
        Q = np.diag(-(B + Dd)) + np.diag(B[:-1], 1) + np.diag(Dd[1:], -1)
        return Q

    def mean_extinction_time(self, n0: int) -> float:
        Q = self._subgenerator()
        return float(np.linalg.solve(-Q, np.ones(self.n_max))[n0 - 1])

    def extinction_cdf(self, n0: int, t: float) -> float:
        Q = self._subgenerator()
        p = expm(Q * t)[n0 - 1]
        return float(1.0 - p.sum())

    def quantile(self, n0: int, q: float) -> float:
        hi = max(1.0, self.mean_extinction_time(n0))
        while self.extinction_cdf(n0, hi) < q:
            hi *= 2
        return float(optimize.brentq(lambda t: self.extinction_cdf(n0, t) - q, 0.0, hi, xtol=1e-10 * hi))


def linear_extinction_cdf(lam: float, mu: float, t):
    """P(extinct by t) for a linear birth-death process from one individual (lam < mu)."""
    t = np.asarray(t, dtype=float)
    e = np.exp(-(mu - lam) * t)
    return mu * (1.0 - e) / (mu - lam * e)


def linear_extinction_mean(lam: float, mu: float, n0: int) -> float:
    """Mean extinction time of ``n0`` independent linear lineages (the maximum of n0 times)."""
    f = lambda t: 1.0 - linear_extinction_cdf(lam, mu, t) ** n0  # noqa: E731
    hi = 10 * linear_extinction_quantile(lam, mu, n0, 1 - 1e-12)
    return float(integrate.quad(f, 0, hi, limit=200)[0])


def linear_extinction_quantile(lam: float, mu: float, n0: int, q: float) -> float:
    # F(t)^n0 = q  <=>  F(t) = q^(1/n0)
    p = q ** (1.0 / n0)
    # invert mu (e-1)/(mu e - lam) = p  ->  e = (mu - p lam) / (mu (1 - p))
    e = (mu - p * lam) / (mu * (1.0 - p))
    return float(np.log(e) / (mu - lam))


@dataclass
class ExtinctionSummary:
    replicates: int
    extinct: int
    fraction: float
    mean_time: float
    stderr_time: float
    quantiles: dict
    cap: float
    oracle_mean: float | None = None
    oracle_q99: float | None = None
    mass_times: np.ndarray | None = None
    mean_mass: np.ndarray | None = None
    mass_bound: float | None = None
    mass_bound_ok: bool | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        out = dict(self.__dict__)
        for k in ("mass_times", "mean_mass"):
            if out[k] is not None:
                out[k] = np.asarray(out[k]).tolist()
        return out


def _summarize(traces, cap, grid):
    times = np.array([tr.extinction_time if tr.extinct else np.nan for tr in traces])
    ext = np.isfinite(times)
    R = len(traces)
    et = times[ext]
    qs = {str(q): float(np.quantile(et, q)) for q in (0.5, 0.9, 0.99)} if ext.any() else {}
    mean = float(et.mean()) if ext.any() else float("nan")
    se = float(et.std(ddof=1) / np.sqrt(len(et))) if ext.sum() > 1 else float("nan")
    masses = np.array([tr.count for tr in traces], dtype=float)
    return ExtinctionSummary(R, int(ext.sum()), float(ext.mean()), mean, se, qs, float(cap),
                             mass_times=np.asarray(grid), mean_mass=masses.mean(axis=0))


def subcritical_extinction(params: ModelParams, initial: Population, replicates: int, seed: int = 0,
                           threads: int | None = None, cap_factor: float = 10.0, n_grid: int = 200):
    """Runs with sup gamma < inf mu: compared with the dominating linear birth-death process.

    Horizon: ``cap_factor`` times the 99th percentile of the extinction time
    of ``N0`` independent linear lineages with rates ``(sup gamma, inf mu)``.
    """
    lam, mu = params.gamma.sup, params.mu.inf
    if not lam < mu:
        raise ValueError("subcritical study needs sup gamma < inf mu")
    n0 = len(initial)
    q99 = linear_extinction_quantile(lam, mu, n0, 0.99)
    cap = cap_factor * q99
    grid = np.linspace(0, cap, n_grid + 1)
    spec = FleetSpec(params, initial, cap, seed, snapshot_times=tuple(grid))
    traces = run_replicates(spec, replicates, threads)
    s = _summarize(traces, cap, grid)
    s.oracle_mean = linear_extinction_mean(lam, mu, n0)
    s.oracle_q99 = q99
    return s


def compact_extinction(params: ModelParams, initial: Population, replicates: int, delta: float, eps: float,
                       seed: int = 0, threads: int | None = None, cap_factor: float = 10.0,
                       n_grid: int = 200, n_max: int | None = None):
    """Extinction on a torus with ``U >= eps 1{|x - y| <= delta}``.

    The dominating chain has births ``gamma_bar N`` and deaths
    ``mu_inf N + alpha0 eps N^2 / L~``; the horizon is ``cap_factor`` times
    its 99th-percentile extinction time.  The mean mass is compared with
    ``max(E<nu_0,1>, x0)``.
    """
    dom = params.domain
    if not dom.periodic:
        raise ValueError("compact extinction needs a torus")
    L = dom.side[0]
    Lt = cube_count(L, delta, dom.d)
    g, m, a0 = params.gamma.sup, params.mu.inf, params.alpha.inf
    x0 = mass_bound(float(np.max(params.gamma.values) - np.min(params.mu.values)), Lt, a0, eps)
    n_max = n_max or int(max(50, 6 * x0 + 50))
    chain = BirthDeathChain(lambda n: g * n, lambda n: m * n + a0 * eps * n**2 / Lt, n_max)
    n0 = max(1, len(initial))
    q99 = chain.quantile(n0, 0.99)
    cap = cap_factor * q99
    grid = np.linspace(0, cap, n_grid + 1)
    spec = FleetSpec(params, initial, cap, seed, snapshot_times=tuple(grid))
    traces = run_replicates(spec, replicates, threads)
    s = _summarize(traces, cap, grid)
    s.oracle_mean = chain.mean_extinction_time(n0)
    s.oracle_q99 = q99
    s.mass_bound = max(float(len(initial)), x0)
    s.mass_bound_ok = bool(np.max(s.mean_mass) < s.mass_bound)
    s.extra = {"L_tilde": Lt, "x0": x0}
    return s


def mass_bound_run(params: ModelParams, initial: Population, replicates: int, horizon: float, delta: float,
                   eps: float, seed: int = 0, threads: int | None = None, n_grid: int = 200,
                   slack: float = 1.25):
    """Running sup of the mean mass over ``[0, horizon]`` against ``slack * max(E<nu_0,1>, x0)``."""
    dom = params.domain
    Lt = cube_count(dom.side[0], delta, dom.d)
    x0 = mass_bound(float(np.max(params.gamma.values) - np.min(params.mu.values)), Lt, params.alpha.inf, eps)
    grid = np.linspace(0, horizon, n_grid + 1)
    spec = FleetSpec(params, initial, horizon, seed, snapshot_times=tuple(grid))
    traces = run_replicates(spec, replicates, threads)
    masses = np.array([tr.count for tr in traces], dtype=float)
    mean_mass = masses.mean(axis=0)
    bound = max(float(len(initial)), x0)
    return {
        "L_tilde": Lt, "x0": x0, "bound": bound, "limit": slack * bound, "times": grid.tolist(),
        "mean_mass": mean_mass.tolist(), "running_sup": float(mean_mass.max()),
        "below_x0": bool(mean_mass.max() <= bound), "passed": bool(mean_mass.max() < slack * bound),
    }
