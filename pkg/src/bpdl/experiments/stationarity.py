"""Generator evaluation, Poisson stationarity under detailed balance, and the Slivnyak identity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..domain import SpatialDomain
from ..model import ModelParams, Population, poisson_configuration
from ..rng import Stream
from ..statistics import competition_sums
from ..testfunctions import OuterMap, TestFunction, adaptive_quad_batch


def eval_generator(F: OuterMap, f: TestFunction, pop: Population | np.ndarray, params: ModelParams,
                   tol: float = 1e-8) -> float:
    """``L phi(nu)`` for ``phi(nu) = F(<nu, f>)``, evaluated term by term (d = 1).

    Birth term: ``sum_i gamma(x_i) int D(z) [F(u + f(x_i + z)) - F(u)] dz`` by
    adaptive Gauss-Legendre quadrature split at the kinks of ``D`` and ``f``.
    Death term: ``sum_i (mu(x_i) + alpha(x_i) S_i) [F(u - f(x_i)) - F(u)]``.
    ``f`` must be compactly supported well inside the sampled window so that
    every term touching its support is exact.

    Raises
    ------
    QuadratureFail
        The birth quadrature did not converge.
    """
    if params.d != 1:
        raise NotImplementedError("generator evaluation is implemented for d = 1")
    x = pop.positions if isinstance(pop, Population) else np.asarray(pop, dtype=float).reshape(-1, 1)
    if len(x) == 0:
        return 0.0
    fx = f(x)
    u = float(fx.sum())
    Fu = float(F(u))
    D = params.D
    RD = D.support_radius
    if not np.isfinite(RD):
        RD = 12 * np.sqrt(D.params[0])
    supp = f.support()
    gam = params.gamma(x)
    total = 0.0
    # birth term: only parents whose dispersal range meets supp f contribute
    near = gam != 0
    if supp is not None:
        near &= (x[:, 0] + RD >= supp[0][0]) & (x[:, 0] - RD <= supp[1][0])
    idx = np.nonzero(near)[0]
    if len(idx):
        # pieces between the kinks of D and of f(x_i + .), per parent
        kinks = np.concatenate([[-RD, RD], D.breakpoints_1d()])
        fk = f.breakpoints_1d()
        cuts = np.concatenate([np.broadcast_to(kinks, (len(idx), len(kinks))),
                               fk[None, :] - x[idx, 0][:, None]], axis=1)
        cuts = np.sort(np.clip(cuts, -RD, RD), axis=1)
        lo, hi = cuts[:, :-1].ravel(), cuts[:, 1:].ravel()
        parent = np.repeat(np.arange(len(idx)), cuts.shape[1] - 1)
        keep = hi > lo
        lo, hi, parent = lo[keep], hi[keep], parent[keep]
        xp = x[idx, 0][parent]

        def g(z, k):
            return D(z) * (F(u + f((xp[k] + z).reshape(-1, 1))) - Fu)

        pieces = adaptive_quad_batch(g, lo, hi, 2 * RD, tol=tol)
        total += float(np.sum(gam[idx][parent] * pieces))
    # death term
    live = fx != 0
    if live.any():
        S = competition_sums(x, params)
        rate = params.mu(x) + params.alpha(x) * S
        total += float(np.sum((rate * (F(u - fx) - Fu))[live]))
    return float(total)


def delta_generator_closed_form(f: TestFunction, x: float, params: ModelParams) -> float:
    """``L phi(delta_x)`` for ``F`` = identity: ``gamma int D(z) f(x+z) dz - f(x)(mu + alpha U(0))``."""
    from ..statistics import kernel_average

    xx = np.array([[x]])
    Df = kernel_average(params.D, f, xx, params)[0]
    U0 = float(params.U(0.0))
    return float(params.gamma(xx)[0] * Df - f(xx)[0] * (params.mu(xx)[0] + params.alpha(xx)[0] * U0))


@dataclass
class StationarityResult:
    label: str
    mean: float
    stderr: float
    n: int

    @property
    def ci(self):
        return (self.mean - 3 * self.stderr, self.mean + 3 * self.stderr)

    @property
    def contains_zero(self) -> bool:
        return abs(self.mean) <= 3 * self.stderr

    def to_dict(self):
        return {"label": self.label, "mean": self.mean, "stderr": self.stderr, "ci": list(self.ci),
                "contains_zero": self.contains_zero, "n": self.n}


def default_battery(inner: float = 1.0, K: float = 10.0):
    """Three outer maps times two inner functions supported in ``[-inner, inner]``."""
    fs = {"box": TestFunction.indicator(-inner, inner), "tent": TestFunction.triangle(0.0, inner)}
    Fs = {"min": OuterMap("min", K), "ratio": OuterMap("ratio"), "arctan": OuterMap("arctan", K)}
    return [(f"{Fn}/{fn}", F, f) for Fn, F in Fs.items() for fn, f in fs.items()]


def stationarity_test(params: ModelParams, intensity: float, replicates: int, battery=None, seed: int = 0,
                      inner: float = 1.0, pad: float | None = None) -> list[StationarityResult]:
    """Mean of ``L phi`` over Poisson configurations on ``[-inner - pad, inner + pad]``.

    ``pad`` defaults to the larger support radius of ``D`` and ``U``; every
    generator term touching ``[-inner, inner]`` then sees the full
    configuration it depends on.
    """
    battery = battery or default_battery(inner)
    if pad is None:
        pad = max(params.D.support_radius, params.U.support_radius)
    w = inner + pad
    window = (np.array([-w]), np.array([w]))
    vals = np.zeros((replicates, len(battery)))
    for r in range(replicates):
        st = Stream(seed, r)
        pop = poisson_configuration(window, intensity, st)
        for k, (_, F, f) in enumerate(battery):
            vals[r, k] = eval_generator(F, f, pop, params)
    out = []
    for k, (label, _, _) in enumerate(battery):
        v = vals[:, k]
        out.append(StationarityResult(label, float(v.mean()), float(v.std(ddof=1) / np.sqrt(replicates)),
                                      replicates))
    return out


# ---------------------------------------------------------------------------
# Slivnyak


@dataclass(frozen=True)
class PalmFunction:
    """``h(x, nu)`` from a small catalog: ``zero``, ``indicator`` (1_B(x)), ``count`` (1_B(x) nu(B))."""

    kind: str
    lo: float = -1.0
    hi: float = 1.0

    def __call__(self, x: np.ndarray, config: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        inB = (x >= self.lo) & (x <= self.hi)
        if self.kind == "zero":
            return np.zeros(len(x))
        if self.kind == "indicator":
            return inB.astype(float)
        if self.kind == "count":
            c = np.asarray(config, dtype=float).reshape(-1)
            nB = float(((c >= self.lo) & (c <= self.hi)).sum())
            return inB * nB
        raise ValueError(f"unknown h kind {self.kind!r}")


@dataclass
class SlivnyakResult:
    label: str
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float
    exact: float | None

    @property
    def agree(self) -> bool:
        lo1, hi1 = self.lhs - 3 * self.lhs_se, self.lhs + 3 * self.lhs_se
        lo2, hi2 = self.rhs - 3 * self.rhs_se, self.rhs + 3 * self.rhs_se
        return max(lo1, lo2) <= min(hi1, hi2)

    @property
    def exact_ok(self) -> bool | None:
        if self.exact is None:
            return None
        return abs(self.lhs - self.exact) <= 3 * self.lhs_se or (self.lhs_se == 0 and self.lhs == self.exact)

    def to_dict(self):
        return {**self.__dict__, "agree": self.agree, "exact_ok": self.exact_ok}


def slivnyak_check(window: tuple, intensity: float, h: PalmFunction, replicates: int, seed: int = 0,
                   label: str | None = None) -> SlivnyakResult:
    """Both sides of ``E sum_i h(x_i, nu) = int m(dx) E h(x, nu + delta_x)`` for a Poisson ``nu`` on ``window``.

    The right side draws ``x`` uniformly on the window and an independent
    configuration, scaled by ``m(window)``.
    """
    lo, hi = float(window[0]), float(window[1])
    vol = hi - lo
    mW = intensity * vol
    lhs = np.empty(replicates)
    rhs = np.empty(replicates)
    for r in range(replicates):
        st = Stream(seed, r)
        cfg = poisson_configuration((np.array([lo]), np.array([hi])), intensity, st).positions[:, 0]
        lhs[r] = h(cfg, cfg).sum()
        cfg2 = poisson_configuration((np.array([lo]), np.array([hi])), intensity, st).positions[:, 0]
        xr = lo + vol * st.np.random()
        rhs[r] = mW * h(np.array([xr]), np.append(cfg2, xr))[0]
    lam = intensity * (min(h.hi, hi) - max(h.lo, lo))
    exact = {"zero": 0.0, "indicator": lam, "count": lam**2 + lam}[h.kind]
    se = lambda v: float(v.std(ddof=1) / np.sqrt(len(v)))  # noqa: E731
    return SlivnyakResult(label or h.kind, float(lhs.mean()), se(lhs), float(rhs.mean()), se(rhs), exact)


def dbc_params(gamma: float, alpha: float, a: float, b: float, mu: float = 0.0):
    """Detailed-balance preset: ``D = U`` annulus on ``[a, b]`` (so ``U(0) = 0``), unbounded line."""
    from ..kernels import Kernel
    from ..model import make_params

    K = Kernel.annulus(a, b)
    return make_params(gamma, mu, alpha, K, K, domain=SpatialDomain("unbounded", 1))
