"""Deterministic nonlocal logistic equation on a periodic grid.

Solves ``d xi/dt = gamma (xi * D) - mu xi - alpha xi (xi * U)`` for constant
rates and translation-invariant kernels, and studies its equilibria through
the map ``F f = gamma (f * D) / (mu + alpha (f * U))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NoConvergence, PoleAtZero, StepTooLarge
from .kernels import Kernel
from .model import ModelParams

CLIP_TOL = 1e-12


# ---------------------------------------------------------------------------
# stencils


@dataclass
class KernelStencil:
    """Cell-averaged kernel weights on a periodic grid.

    ``weights`` has the grid's shape: entry ``m`` is the kernel mass of the
    cell at offset ``m`` (folded periodically).  After construction the
    weights are rescaled by ``factor`` so they sum to the exact mass.
    """

    weights: np.ndarray
    mass: float
    factor: float
    offsets: np.ndarray = field(default=None, repr=False)
    _fft: np.ndarray = field(default=None, repr=False)

    @classmethod
    def build(cls, kernel: Kernel, n: int, L: float, quad: int = 16) -> "KernelStencil":
        d = kernel.d
        h = L / n
        R = kernel.support_radius
        if not np.isfinite(R):
            R = 12.0 * np.sqrt(kernel.params[0])
        M = int(np.ceil(R / h)) + 1
        m = np.arange(-M, M + 1)
        if d == 1:
            w1 = kernel.mass * np.diff(kernel.cdf1d((np.append(m, M + 1) - 0.5) * h))
            w = np.zeros(n)
            np.add.at(w, m % n, w1)
        elif d == 2:
            if kernel.shape == "gaussian":
                k1 = Kernel.gaussian(kernel.params[0], 1.0, 1)
                p1 = np.diff(k1.cdf1d((np.append(m, M + 1) - 0.5) * h))
                w2 = kernel.mass * np.outer(p1, p1)
            else:
                # midpoint rule on a quad x quad sub-grid of every cell
                s = (np.arange(quad) + 0.5) / quad - 0.5
                sub = (m[:, None] + s[None, :]).ravel() * h
                X, Y = np.meshgrid(sub, sub, indexing="ij")
                vals = kernel(np.stack([X.ravel(), Y.ravel()], axis=1)).reshape(len(m), quad, len(m), quad)
                w2 = vals.sum(axis=(1, 3)) * (h / quad) ** 2
            w = np.zeros((n, n))
            np.add.at(w, (m[:, None] % n, m[None, :] % n), w2)
        else:
            raise ValueError("mean-field grids support d <= 2")
        total = w.sum()
        factor = kernel.mass / total if total > 0 else 1.0
        w = w * factor
        nz = np.argwhere(w != 0.0)
        return cls(w, kernel.mass, factor, nz)

    def convolve(self, values: np.ndarray, method: str = "auto") -> np.ndarray:
        """``(xi * K)`` at every grid point (sum over cells of ``xi_{i-m} w_m``)."""
        if method == "auto":
            method = "direct" if len(self.offsets) <= 48 else "fft"
        if method == "direct":
            out = np.zeros_like(values, dtype=float)
            for off in self.offsets:
                out += self.weights[tuple(off)] * np.roll(values, tuple(off), axis=tuple(range(values.ndim)))
            return out
        if self._fft is None:
            self._fft = np.fft.rfftn(self.weights)
        return np.fft.irfftn(np.fft.rfftn(values) * self._fft, s=values.shape, axes=tuple(range(values.ndim)))


# ---------------------------------------------------------------------------
# fields


def _constant_rates(params: ModelParams):
    if not params.constant_rates:
        raise ValueError("the mean-field solver needs spatially constant rates")
    return params.gamma.sup, params.mu.sup, params.alpha.sup


class DensityField:
    """Nonnegative density on a periodic grid of ``n`` cells per axis and side ``L``.

    Grid point ``k`` sits at the centre ``-L/2 + (k + 1/2) h`` of its cell.
    """

    def __init__(self, values, L: float, params: ModelParams, stencils=None):
        self.values = np.asarray(values, dtype=float)
        self.L = float(L)
        self.params = params
        self.d = self.values.ndim
        if self.d != params.d:
            raise ValueError("field dimension does not match the model")
        if self.values.shape != (self.values.shape[0],) * self.d:
            raise ValueError("field grid must have the same number of cells on every axis")
        self._stencils = stencils

    @classmethod
    def constant(cls, c: float, n: int, L: float, params: ModelParams) -> "DensityField":
        return cls(np.full((n,) * params.d, float(c)), L, params)

    @classmethod
    def from_function(cls, f, n: int, L: float, params: ModelParams) -> "DensityField":
        probe = cls(np.zeros((n,) * params.d), L, params)
        return cls(np.asarray(f(probe.points()), dtype=float).reshape((n,) * params.d), L, params)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def h(self) -> float:
        return self.L / self.n

    def axis(self) -> np.ndarray:
        return -self.L / 2 + (np.arange(self.n) + 0.5) * self.h

    def points(self) -> np.ndarray:
        ax = self.axis()
        if self.d == 1:
            return ax.reshape(-1, 1)
        X, Y = np.meshgrid(ax, ax, indexing="ij")
        return np.stack([X.ravel(), Y.ravel()], axis=1)

    @property
    def stencils(self) -> tuple[KernelStencil, KernelStencil]:
        if self._stencils is None:
            self._stencils = (KernelStencil.build(self.params.D, self.n, self.L),
                              KernelStencil.build(self.params.U, self.n, self.L))
        return self._stencils

    def with_values(self, values) -> "DensityField":
        return DensityField(values, self.L, self.params, self._stencils)

    def mass(self) -> float:
        return float(self.h**self.d * self.values.sum())

    def integrate_against(self, f) -> float:
        """``<xi, f>`` by the midpoint rule on the grid."""
        return float(self.h**self.d * np.sum(self.values.ravel() * f(self.points())))

    def l2_to(self, c: float) -> float:
        return float(self.h**self.d * np.sum((self.values - c) ** 2))

    def copy(self) -> "DensityField":
        return self.with_values(self.values.copy())


def rhs(field: DensityField, method: str = "auto") -> np.ndarray:
    """``gamma (xi * D) - mu xi - alpha xi (xi * U)`` at every grid point."""
    return _rhs_values(field, field.values, method)


def _rhs_values(field, v, method="auto"):
    g, m, a = _constant_rates(field.params)
    sD, sU = field.stencils
    return g * sD.convolve(v, method) - m * v - a * v * sU.convolve(v, method)


def stability_dt(field: DensityField) -> float:
    """Largest step ``0.1 / (gamma + mu + alpha sup(xi) int U)`` accepted by :func:`integrate`."""
    g, m, a = _constant_rates(field.params)
    return 0.1 / (g + m + a * max(field.values.max(), 0.0) * field.params.U.mass)


@dataclass
class IntegrationResult:
    field: DensityField
    times: np.ndarray
    mass: np.ndarray
    snapshots: list
    max_clip: float


def integrate(field0: DensityField, T: float, dt: float, out_times=None, check_stability: bool = True,
              method: str = "auto") -> IntegrationResult:
    """Classical RK4 from ``field0`` to ``T`` with step ``dt``.

    Negative values are clipped to zero after each step; the clipped mass
    must stay below ``1e-12`` of the total or ``StepTooLarge`` is raised.
    ``out_times`` (rounded to the step grid) selects snapshots; the mass is
    recorded at every step.
    """
    if check_stability and dt > stability_dt(field0) * (1 + 1e-12):
        raise StepTooLarge(f"dt={dt:g} exceeds the stability bound {stability_dt(field0):g}")
    nsteps = int(round(T / dt))
    if nsteps * dt < T - 1e-12 * max(1.0, T):
        nsteps += 1
    dt = T / nsteps if nsteps else dt
    want = set()
    if out_times is not None:
        want = {int(round(t / dt)) for t in out_times}
    v = field0.values.copy()
    hd = field0.h**field0.d
    times, masses, snaps = [0.0], [hd * v.sum()], []
    if 0 in want:
        snaps.append((0.0, field0.with_values(v.copy())))
    worst = 0.0
    f = lambda u: _rhs_values(field0, u, method)  # noqa: E731
    for k in range(1, nsteps + 1):
        k1 = f(v)
        k2 = f(v + 0.5 * dt * k1)
        k3 = f(v + 0.5 * dt * k2)
        k4 = f(v + dt * k3)
        v = v + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        neg = v < 0
        if neg.any():
            clip = -v[neg].sum()
            total = np.abs(v).sum()
            rel = clip / total if total > 0 else 0.0
            worst = max(worst, rel)
            if rel > CLIP_TOL:
                raise StepTooLarge(f"clipped {rel:.3g} of the mass at t={k * dt:g}; reduce dt")
            v[neg] = 0.0
        times.append(k * dt)
        masses.append(hd * v.sum())
        if k in want:
            snaps.append((k * dt, field0.with_values(v.copy())))
    return IntegrationResult(field0.with_values(v), np.array(times), np.array(masses), snaps, worst)


def picard_iterate(field0: DensityField, T: float, n_iters: int, window: float = 0.1,
                   substep: float = 5e-4, return_history: bool = False):
    """Implicit Picard scheme, applied window by window.

    On each window ``[s, s + window]`` the path is iterated ``n_iters``
    times starting from the constant path.  Iterate ``k+1`` solves the
    equation that is linear in itself,
    ``d xi/dt = gamma (xi^k * D) - (mu + alpha (xi^k * U)) xi``,
    with ``xi^k`` frozen on each substep at the average of its end values;
    the scalar linear equation at every grid point is integrated exactly.
    """
    g, m, a = _constant_rates(field0.params)
    sD, sU = field0.stencils
    v0 = field0.values.copy()
    history = []
    t = 0.0
    while t < T - 1e-14:
        w = min(window, T - t)
        ns = max(1, int(np.ceil(w / substep - 1e-9)))
        dtau = w / ns
        path = np.repeat(v0[None, ...], ns + 1, axis=0)
        for _ in range(n_iters):
            conv_D = np.stack([sD.convolve(p) for p in path])
            conv_U = np.stack([sU.convolve(p) for p in path])
            A = g * 0.5 * (conv_D[1:] + conv_D[:-1])
            B = m + a * 0.5 * (conv_U[1:] + conv_U[:-1])
            new = np.empty_like(path)
            new[0] = v0
            for k in range(ns):
                b = B[k]
                e = np.exp(-b * dtau)
                with np.errstate(divide="ignore", invalid="ignore"):
                    frac = np.where(b > 0, (1 - e) / np.where(b > 0, b, 1.0), dtau)
                new[k + 1] = new[k] * e + A[k] * frac
            if return_history:
                history.append(float(np.abs(new[-1] - path[-1]).max()))
            path = new
        v0 = path[-1]
        t += w
    out = field0.with_values(v0)
    return (out, history) if return_history else out


# ---------------------------------------------------------------------------
# equilibria


def apply_F(field: DensityField) -> DensityField:
    """``F f = gamma (f * D) / (mu + alpha (f * U))``.

    Raises
    ------
    PoleAtZero
        The denominator vanishes at some grid point.
    """
    g, m, a = _constant_rates(field.params)
    sD, sU = field.stencils
    den = m + a * sU.convolve(field.values)
    if np.any(den <= 0):
        raise PoleAtZero("mu + alpha (f * U) vanishes on the grid")
    return field.with_values(np.maximum(g * sD.convolve(field.values) / den, 0.0))


def c0_of(params: ModelParams) -> float:
    g, m, a = _constant_rates(params)
    return (g - m) / a


@dataclass
class FixedPointResult:
    field: DensityField
    iterations: int
    sup_dist: list
    sup_change: list
    eps0: list
    ratios: list
    bounds: list
    contraction_ok: bool


def fixed_point(field0: DensityField, tol: float = 1e-10, max_iters: int = 1000) -> FixedPointResult:
    """Iterate ``c <- F c`` until the sup-norm change drops below ``tol``.

    The history records ``sup|c_k - c0|``, the running minimum ``eps0`` of the
    iterates, the observed ratio ``dist_{k+1}/dist_k`` and the bound
    ``mu / (mu + alpha eps0)`` it is compared against.

    Raises
    ------
    NoConvergence
        ``max_iters`` applications did not converge.
    """
    g, m, a = _constant_rates(field0.params)
    c0 = c0_of(field0.params)
    c = field0
    dist = [float(np.abs(c.values - c0).max())]
    changes, eps, ratios, bounds = [], [], [], []
    eps0 = float(c.values.min())
    ok = True
    for k in range(max_iters):
        new = apply_F(c)
        change = float(np.abs(new.values - c.values).max())
        changes.append(change)
        if change < tol:
            return FixedPointResult(c, k, dist, changes, eps, ratios, bounds, ok)
        d_new = float(np.abs(new.values - c0).max())
        bound = m / (m + a * eps0) if (m + a * eps0) > 0 else 1.0
        if dist[-1] > 0 and dist[-1] > 1e3 * np.finfo(float).eps * max(c0, 1.0):
            r = d_new / dist[-1]
            ratios.append(r)
            bounds.append(bound)
            eps.append(eps0)
            if r > bound * (1 + 1e-9):
                ok = False
        eps0 = min(eps0, float(new.values.min()))
        dist.append(d_new)
        c = new
    raise NoConvergence(f"fixed-point iteration did not reach tol={tol:g} in {max_iters} iterations")


@dataclass
class AssumptionCReport:
    gamma_gt_mu: bool
    pointwise_margin: float
    pointwise_ok: bool
    R_mass: float
    R_mass_ok: bool
    D_equals_U: bool

    @property
    def passed(self) -> bool:
        return self.gamma_gt_mu and self.pointwise_ok and self.R_mass_ok

    def to_dict(self):
        return {**self.__dict__, "passed": self.passed}


def check_assumption_C(params: ModelParams, n: int = 4096, L: float | None = None,
                       mass_tol: float = 1e-6) -> AssumptionCReport:
    """Check ``gamma > mu``, ``gamma D >= (gamma - mu) U`` on a grid of offsets, and ``int R = 1``.

    ``R = D + ((gamma - mu)/mu)(D - U)``; its mass follows from the kernel masses.
    """
    g, m, _ = _constant_rates(params)
    D, U = params.D, params.U
    if L is None:
        R = max(D.support_radius, U.support_radius)
        if not np.isfinite(R):
            R = 12 * np.sqrt(max(k.params[0] for k in (D, U) if k.shape == "gaussian"))
        L = 2.2 * R
    z = (np.arange(n) + 0.5) * (L / n) - L / 2
    if params.d == 1:
        Z = z.reshape(-1, 1)
    else:
        Z = np.zeros((n, params.d))
        Z[:, 0] = z
    edges = []
    for k in (D, U):
        if k.shape in ("tophat", "annulus"):
            for p in k.params:
                edges += [p, -p]
    if edges:
        E = np.zeros((len(edges), params.d))
        E[:, 0] = edges
        Z = np.vstack([Z, E])
    margin = float(np.min(g * D(Z) - (g - m) * U(Z)))
    same = D.shape == U.shape and np.array_equal(D.encode(), U.encode())
    if m > 0:
        Rmass = D.numeric_mass() + (g - m) / m * (D.numeric_mass() - U.numeric_mass())
    else:
        Rmass = float("nan")
    return AssumptionCReport(g > m, margin, margin >= -1e-12, float(Rmass),
                             bool(abs(Rmass - 1.0) <= mass_tol), bool(same))


@dataclass
class DecayReport:
    times: np.ndarray
    energy: np.ndarray
    monotone: bool
    rate: float
    r2: float


def l2_decay_check(field0: DensityField, T: float, dt: float | None = None, n_out: int = 50,
                   fit_floor: float = 1e-20) -> DecayReport:
    """Track ``E(t) = h^d sum (xi_t - c0)^2``; check monotonicity and fit ``E ~ e^{-a t}``."""
    c0 = c0_of(field0.params)
    dt = dt or stability_dt(field0.with_values(np.maximum(field0.values, c0)))
    outs = np.linspace(0, T, n_out + 1)
    res = integrate(field0, T, dt, out_times=outs)
    times = np.array([t for t, _ in res.snapshots])
    energy = np.array([f.l2_to(c0) for _, f in res.snapshots])
    mono = bool(np.all(np.diff(energy) <= 1e-14 * max(energy[0], 1e-300)))
    keep = energy > fit_floor
    if keep.sum() >= 3:
        A = np.vstack([np.ones(keep.sum()), times[keep]]).T
        y = np.log(energy[keep])
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        pred = A @ coef
        ss_res = float(np.sum((y - pred) ** 2))
        ss_tot = float(np.sum((y - y.mean()) ** 2))
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
        rate = -float(coef[1])
    else:
        rate, r2 = float("inf"), 1.0
    return DecayReport(times, energy, mono, rate, r2)


@dataclass
class DBCReport:
    times: np.ndarray
    bound_ok: bool
    worst_excess: float
    monotone_ok: bool

    @property
    def passed(self):
        return self.bound_ok and self.monotone_ok


def dbc_bound_check(field0: DensityField, T: float, dt: float | None = None, n_out: int = 40) -> DBCReport:
    """Pointwise bound ``(xi_t - c0)^2 <= (xi_0 - c0)^2 exp(-2 alpha [(xi_0 ^ c0) * D] t)``.

    Needs ``mu = 0`` and ``D = U``.  Also checks that grid points below ``c0``
    never decrease and points above never increase.
    """
    g, m, a = _constant_rates(field0.params)
    if m != 0:
        raise ValueError("the detailed-balance bound needs mu = 0")
    c0 = g / a
    sD, _ = field0.stencils
    v0 = field0.values
    rate = 2 * a * sD.convolve(np.minimum(v0, c0))
    dt = dt or stability_dt(field0.with_values(np.maximum(v0, c0)))
    outs = np.linspace(0, T, n_out + 1)
    res = integrate(field0, T, dt, out_times=outs)
    ok, worst, mono = True, -np.inf, True
    prev = v0
    below, above = v0 < c0, v0 > c0
    for t, f in res.snapshots:
        lhs = (f.values - c0) ** 2
        rhs_ = (v0 - c0) ** 2 * np.exp(-rate * t)
        excess = lhs - rhs_
        tol = 1e-12 * max(1.0, c0**2)
        worst = max(worst, float(excess.max()))
        if np.any(excess > tol):
            ok = False
        step = f.values - prev
        if np.any(step[below] < -1e-12) or np.any(step[above] > 1e-12):
            mono = False
        prev = f.values
    return DBCReport(np.array([t for t, _ in res.snapshots]), ok, worst, mono)


def logistic_closed_form(n0: float, r: float, K: float, t):
    """``K n0 e^{rt} / (K + n0 (e^{rt} - 1))``."""
    e = np.exp(r * np.asarray(t, dtype=float))
    return K * n0 * e / (K + n0 * (e - 1.0))
