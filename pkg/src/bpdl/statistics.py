"""Estimators over simulated traces."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from . import _engine
from .errors import NoSnapshot
from .kernels import Kernel, ball_volume
from .model import ModelParams
from .simulator import LineageTable, Trace, interaction_load_of, make_cell_grid
from .testfunctions import TestFunction


@dataclass
class EnsembleStat:
    t: float
    mean: float
    variance: float
    stderr: float
    n_replicates: int

    def to_dict(self):
        return dict(self.__dict__)


def ensemble(values, t: float = float("nan")) -> EnsembleStat:
    v = np.asarray(values, dtype=float)
    n = len(v)
    if n < 2:
        raise ValueError("need at least two replicates")
    var = float(v.var(ddof=1))
    return EnsembleStat(t, float(v.mean()), var, float(np.sqrt(var / n)), n)


def _window_count(x: np.ndarray, window) -> int:
    lo, hi = (np.atleast_1d(np.asarray(a, dtype=float)) for a in window)
    return int(np.all((x >= lo) & (x <= hi), axis=1).sum())


def counts_at(traces: Sequence[Trace], t: float, window=None) -> np.ndarray:
    out = np.empty(len(traces))
    for k, tr in enumerate(traces):
        i = tr.snapshot_index(t)
        out[k] = tr.count[i] if window is None else _window_count(tr.positions_at(t), window)
    return out


def estimate_count(traces: Sequence[Trace], t: float, window=None) -> EnsembleStat:
    """Mean and spread of ``<nu_t, 1>`` (or of the count in ``window``) over replicates.

    Raises
    ------
    NoSnapshot
        Some trace has no snapshot at ``t``.
    """
    return ensemble(counts_at(traces, t, window), t)


# ---------------------------------------------------------------------------
# pair statistics


def _pairs_within(x: np.ndarray, r: float, params: ModelParams):
    """Unordered pairs (i<j) closer than ``r`` (minimal image on periodic domains)."""
    dom = params.domain
    if len(x) < 2:
        return np.empty((0, 2), dtype=np.int64)
    if not np.isfinite(r):
        i, j = np.triu_indices(len(x), 1)
        return np.stack([i, j], axis=1)
    if dom.periodic:
        L = np.asarray(dom.side)
        y = np.mod(x + L / 2, L)
        y[y >= L] = 0.0
        tree = cKDTree(y, boxsize=L)
    else:
        tree = cKDTree(x)
    return tree.query_pairs(r * (1 + 1e-12), output_type="ndarray")


def _lags(x, pairs, params):
    z = x[pairs[:, 1]] - x[pairs[:, 0]]
    dom = params.domain
    if dom.periodic:
        L = np.asarray(dom.side)
        z = z - L * np.round(z / L)
    return np.linalg.norm(z, axis=1)


@dataclass
class CovarianceEstimate:
    """Per-unit-volume covariance measure on lag-distance bins.

    ``c[k]`` estimates ``(E sum_{i != j} phi_k(x_i - x_j) - n^2 V int phi_k) / V``
    with ``phi_k`` the indicator of the k-th lag shell.  ``pair_term`` is the
    first (uncentred) part.
    """

    edges: np.ndarray
    c: np.ndarray
    stderr: np.ndarray
    pair_term: np.ndarray
    intensity: float
    volume: float
    n_replicates: int

    @property
    def left(self):
        return self.edges[:-1]

    @property
    def width(self):
        return np.diff(self.edges)


def shell_volume(a: float, b: float, d: int) -> float:
    return ball_volume(b, d) - ball_volume(a, d)


def covariance_measure(traces: Sequence[Trace], t: float, bins, params: ModelParams) -> CovarianceEstimate:
    """Covariance measure of the configurations at ``t`` on lag shells ``[e_k, e_{k+1})``.

    Ordered pairs ``i != j`` are counted with minimal-image lags.
    """
    edges = np.asarray(bins, dtype=float)
    V = params.domain.volume
    d = params.d
    rmax = edges[-1]
    R = len(traces)
    P = np.zeros((R, len(edges) - 1))
    N = np.zeros(R)
    for k, tr in enumerate(traces):
        x = tr.positions_at(t)
        N[k] = len(x)
        pairs = _pairs_within(x, rmax, params)
        if len(pairs):
            lag = _lags(x, pairs, params)
            # ordered pairs: each unordered pair counts twice
            P[k] = 2 * np.histogram(lag, bins=edges)[0]
    phi_int = np.array([shell_volume(a, b, d) for a, b in zip(edges[:-1], edges[1:])])
    meanN = N.mean()
    n_hat = meanN / V
    pair_term = P.mean(axis=0) / V
    c = pair_term - n_hat**2 * phi_int
    if R >= 2:
        psi = P / V - 2 * meanN * N[:, None] * phi_int[None, :] / V**2
        se = psi.std(axis=0, ddof=1) / np.sqrt(R)
    else:
        se = np.full(len(c), np.nan)
    return CovarianceEstimate(edges, c, se, pair_term, n_hat, V, R)


def pair_sum(x: np.ndarray, params: ModelParams, kernel: Kernel | None = None) -> float:
    """``sum_{i != j} K(x_i - x_j)`` over ordered pairs (K defaults to U)."""
    K = kernel or params.U
    x = np.asarray(x, dtype=float).reshape(-1, params.d)
    pairs = _pairs_within(x, K.support_radius, params)
    if len(pairs) == 0:
        return 0.0
    z = x[pairs[:, 1]] - x[pairs[:, 0]]
    if params.domain.periodic:
        L = np.asarray(params.domain.side)
        z = z - L * np.round(z / L)
    return float(2 * np.sum(K(z)))


@dataclass
class MomentResidual:
    t: float
    derivative: float
    rhs: float
    residual: float
    ci: tuple
    stderr: float
    n_replicates: int

    @property
    def contains_zero(self) -> bool:
        return self.ci[0] <= 0.0 <= self.ci[1]

    def to_dict(self):
        return {**self.__dict__, "contains_zero": self.contains_zero}


def moment_residual(traces: Sequence[Trace], t: float, dt: float, params: ModelParams, n_boot: int = 1000,
                    level: float = 0.997, seed: int = 0) -> MomentResidual:
    """Residual of the first-moment equation in per-unit-volume form.

    ``dn/dt = n(gamma - mu - alpha n m_U) - alpha U(0) n - alpha int C_t(dr) U(r)``,
    where ``m_U = int U``.  The derivative is a central difference of the
    mean count over ``[t - dt, t + dt]``; the covariance term uses
    :func:`pair_sum` at ``t``.  The confidence interval comes from
    ``n_boot`` bootstrap resamples of the replicates.
    """
    if not params.constant_rates:
        raise ValueError("moment equation check needs constant rates")
    g, m, a = params.gamma.sup, params.mu.sup, params.alpha.sup
    V = params.domain.volume
    mU = params.U.mass
    U0 = params.U(np.zeros(params.d)) if params.d > 1 else params.U(0.0)
    Nm = counts_at(traces, t - dt)
    Np = counts_at(traces, t + dt)
    N0 = counts_at(traces, t)
    Pu = np.array([pair_sum(tr.positions_at(t), params) for tr in traces])
    R = len(traces)

    def resid(idx):
        nm, np_, n0, pu = Nm[idx].mean(-1), Np[idx].mean(-1), N0[idx].mean(-1), Pu[idx].mean(-1)
        deriv = (np_ - nm) / (2 * dt * V)
        nh = n0 / V
        cov = pu / V - nh**2 * mU
        rhs_ = nh * (g - m - a * nh * mU) - a * U0 * nh - a * cov
        return deriv, rhs_

    full = np.arange(R)
    deriv, rhs_ = resid(full)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, R, size=(n_boot, R))
    bd, br = resid(idx)
    boot = bd - br
    lo, hi = np.quantile(boot, [(1 - level) / 2, 1 - (1 - level) / 2])
    return MomentResidual(t, float(deriv), float(rhs_), float(deriv - rhs_), (float(lo), float(hi)),
                          float(boot.std(ddof=1)), R)


# ---------------------------------------------------------------------------
# martingale checks


def kernel_average(D: Kernel, f: TestFunction, x: np.ndarray, params: ModelParams, power: int = 1,
                   panels: int = 64, order: int = 8) -> np.ndarray:
    """``int D(z) f(x + z)^power dz`` for each row of ``x`` (positions wrapped on periodic domains).

    Uses closed forms for constant and (1-D) indicator ``f``; otherwise a
    composite Gauss-Legendre rule over the support of ``D`` split at the
    breakpoints of both functions.
    """
    x = np.asarray(x, dtype=float).reshape(-1, params.d)
    dom = params.domain
    if f.kind == "constant":
        return np.full(len(x), f.scale**power)
    if D.atomic:
        out = np.zeros(len(x))
        e = np.eye(params.d)
        for s in (1.0, -1.0):
            for k in range(params.d):
                z = s * e[k]
                out += D(z) * f(dom.wrap(x + z)) ** power
        return out
    if params.d == 1 and f.kind == "indicator":
        a, b = f.params[0][0], f.params[1][0]
        out = np.zeros(len(x))
        shifts = [0.0]
        if dom.periodic:
            L = dom.side[0]
            R = D.support_radius if np.isfinite(D.support_radius) else 12 * np.sqrt(D.params[0])
            K = int(np.ceil((R + abs(a) + abs(b)) / L)) + 1
            shifts = [k * L for k in range(-K, K + 1)]
        for s in shifts:
            out += D.cdf1d(b + s - x[:, 0]) - D.cdf1d(a + s - x[:, 0])
        return D.mass * f.scale**power * out
    if params.d != 1:
        raise NotImplementedError("quadrature path supports d = 1")
    R = D.support_radius if np.isfinite(D.support_radius) else 12 * np.sqrt(D.params[0])
    gx, gw = np.polynomial.legendre.leggauss(order)
    base = np.concatenate([np.linspace(-R, R, panels + 1), D.breakpoints_1d()])
    fk = f.breakpoints_1d()
    if dom.periodic and len(fk):
        L = dom.side[0]
        K = int(np.ceil((R + np.abs(fk).max()) / L)) + 1
        fk = (fk[None, :] + L * np.arange(-K, K + 1)[:, None]).ravel()
    out = np.empty(len(x))
    for i, xi in enumerate(x[:, 0]):
        edges = np.unique(np.clip(np.concatenate([base, fk - xi]), -R, R))
        h = 0.5 * np.diff(edges)
        nodes = ((edges[:-1] + h)[:, None] + h[:, None] * gx).ravel()
        weights = (h[:, None] * gw).ravel()
        y = dom.wrap((xi + nodes).reshape(-1, 1))
        out[i] = np.sum(weights * D(nodes) * f(y) ** power)
    return out


def lifetime_pair_integrals(x: np.ndarray, birth: np.ndarray, death: np.ndarray, t0: float, t: float,
                            params: ModelParams) -> np.ndarray:
    """``int_{t0}^{t} sum_{j != i} U(x_i, x_j) 1{i, j alive at s} ds`` for every individual i."""
    x = np.ascontiguousarray(np.asarray(x, dtype=float).reshape(-1, params.d))
    out = np.zeros(len(x))
    if len(x) < 2:
        return out
    grid = make_cell_grid(params, x)
    _engine.lifetime_pair_sums(x, np.asarray(birth, dtype=float), np.asarray(death, dtype=float), float(t0),
                               float(t), params.domain.encode(), params.U.encode(), grid, out)
    return out


def path_integrals(lin: LineageTable, t: float, params: ModelParams, f: TestFunction):
    """Return ``(<nu_t,f>, <nu_0,f>, compensator, bracket)`` computed exactly from a lineage table."""
    t0 = lin.t0
    x = lin.positions
    b, dth = lin.birth, lin.death
    seen = b <= t
    x, b, dth = x[seen], b[seen], dth[seen]
    life = np.maximum(0.0, np.minimum(dth, t) - np.maximum(b, t0))
    fx = f(x)
    alive_t = dth > t
    alive_0 = (b <= t0) & (dth > t0)
    nu_t = float(fx[alive_t].sum())
    nu_0 = float(fx[alive_0].sum())
    gam, mu, alp = params.gamma(x), params.mu(x), params.alpha(x)
    Df = kernel_average(params.D, f, x, params, 1)
    Df2 = kernel_average(params.D, f, x, params, 2)
    U0 = float(params.U(np.zeros((1, params.d)))[0])
    # S-integral: int_0^t S_i(s) ds over each lifetime, self term included
    Sint = U0 * life + lifetime_pair_integrals(x, b, dth, t0, t, params)
    comp = np.sum(life * (gam * Df - mu * fx)) - np.sum(alp * fx * Sint)
    brk = np.sum(life * (gam * Df2 + mu * fx**2)) + np.sum(alp * fx**2 * Sint)
    return nu_t, nu_0, float(comp), float(brk)


def martingale_value(lin: LineageTable, t: float, params: ModelParams, f: TestFunction) -> tuple[float, float]:
    """``(M_t^f, <M^f>_t)`` for one replicate."""
    nu_t, nu_0, comp, brk = path_integrals(lin, t, params, f)
    return nu_t - nu_0 - comp, brk


@dataclass
class MartingaleReport:
    t: float
    mean: float
    stderr: float
    variance: float
    bracket_mean: float
    ratio: float | None
    n_replicates: int

    @property
    def mean_ok(self) -> bool:
        return abs(self.mean) <= 3 * self.stderr if self.stderr > 0 else self.mean == 0

    def to_dict(self):
        return {**self.__dict__, "mean_ok": self.mean_ok, "ratio": "NA" if self.ratio is None else self.ratio}


def martingale_summary(values: np.ndarray, brackets: np.ndarray, t: float) -> MartingaleReport:
    values = np.asarray(values, dtype=float)
    brackets = np.asarray(brackets, dtype=float)
    n = len(values)
    var = float(values.var(ddof=1)) if n > 1 else float("nan")
    bm = float(brackets.mean())
    ratio = var / bm if bm > 0 else None
    return MartingaleReport(t, float(values.mean()), float(np.sqrt(var / n)) if n > 1 else float("nan"),
                            var, bm, ratio, n)


def martingale_residual(traces: Sequence[Trace], f: TestFunction, params: ModelParams,
                        t: float | None = None) -> MartingaleReport:
    """Ensemble mean of ``M_t^f`` and the ratio ``Var(M_t^f) / mean <M^f>_t``.

    Needs lineage tables (``record_lineage=True``); ``t`` defaults to the
    last snapshot time.  For ``f = 0`` the ratio is reported as None.
    """
    vals, brs = [], []
    for tr in traces:
        if tr.lineage is None:
            raise NoSnapshot("martingale checks need traces recorded with lineage")
        tt = float(tr.t[-1]) if t is None else t
        mv, bv = martingale_value(tr.lineage, tt, params, f)
        vals.append(mv)
        brs.append(bv)
    return martingale_summary(np.array(vals), np.array(brs), float(traces[0].t[-1]) if t is None else t)


# ---------------------------------------------------------------------------
# spatial summaries


@dataclass
class Histogram:
    edges: np.ndarray
    intensity: np.ndarray
    stderr: np.ndarray
    n_replicates: int


def density_histogram(traces: Sequence[Trace], t: float, bins) -> Histogram:
    """Replicate-averaged count per bin divided by bin length (first coordinate)."""
    edges = np.asarray(bins, dtype=float)
    H = np.array([np.histogram(tr.positions_at(t)[:, 0], bins=edges)[0] for tr in traces], dtype=float)
    H /= np.diff(edges)[None, :]
    n = len(traces)
    se = H.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.full(H.shape[1], np.nan)
    return Histogram(edges, H.mean(axis=0), se, n)


def interaction_load(trace: Trace | np.ndarray, t: float | None, radius: float, params: ModelParams) -> float:
    """``sum_{i: |x_i| <= r} sum_j U(x_i, x_j)`` including ``j = i``."""
    x = trace.positions_at(t) if isinstance(trace, Trace) else np.asarray(trace, dtype=float)
    return interaction_load_of(x, params, radius)


def time_average(traces: Sequence[Trace], t_lo: float, t_hi: float, observable: str = "count",
                 window=None, params: ModelParams | None = None, radius: float | None = None) -> np.ndarray:
    """Per-replicate average of an observable over snapshots in ``[t_lo, t_hi]``.

    ``observable`` is ``"count"`` (total, or in ``window``) or ``"load"``.
    """
    out = np.empty(len(traces))
    for k, tr in enumerate(traces):
        sel = np.flatnonzero((tr.t >= t_lo - 1e-12) & (tr.t <= t_hi + 1e-12))
        if len(sel) == 0:
            raise NoSnapshot(f"no snapshots in [{t_lo}, {t_hi}]")
        if observable == "count":
            if window is None:
                vals = tr.count[sel]
            else:
                vals = [_window_count(tr.positions[i], window) for i in sel]
        elif observable == "load":
            if tr.load is not None:
                vals = tr.load[sel]
            else:
                vals = [interaction_load_of(tr.positions[i], params, radius) for i in sel]
        else:
            raise ValueError(f"unknown observable {observable!r}")
        out[k] = float(np.mean(vals))
    return out


def competition_sums(x: np.ndarray, params: ModelParams) -> np.ndarray:
    x = np.ascontiguousarray(np.asarray(x, dtype=float).reshape(-1, params.d))
    return _engine.competition_sums_brute(x, len(x), params.domain.encode(), params.U.encode())
