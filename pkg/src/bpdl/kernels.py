"""Radially symmetric kernels used for competition, dispersal and envelopes.

A kernel is ``mass * pdf(|z|)`` where ``pdf`` is a probability density on
R^d (or, for the atomic lattice shapes, a probability mass function).
Evaluation and sampling are compiled so the event engines can call them;
the :class:`Kernel` object is the Python-side description.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gamma as _gamma_fn

import numba
import numpy as np
from scipy import integrate, special

from .errors import BadKernel
from .rng import normal, randint, uniform_open

TOPHAT, ANNULUS, GAUSSIAN, LATTICE_NN, POINTWISE, TABULATED = range(6)
SHAPES = {
    "tophat": TOPHAT,
    "annulus": ANNULUS,
    "gaussian": GAUSSIAN,
    "lattice_nn": LATTICE_NN,
    "pointwise": POINTWISE,
    "tabulated": TABULATED,
}
_HEADER = 6  # code, mass, d, p0, p1, ntab (tabulated) or normalizing constant


def ball_volume(r: float, d: int) -> float:
    if d == 1:
        return 2.0 * r
    if d == 2:
        return np.pi * r * r
    if d == 3:
        return 4.0 / 3.0 * np.pi * r**3
    return np.pi ** (d / 2) / _gamma_fn(d / 2 + 1) * r**d


@dataclass(frozen=True, eq=False)
class Kernel:
    """Symmetric kernel ``K(z) = mass * pdf(|z|)``.

    Shapes and their parameters::

        tophat      radius                uniform on the closed ball
        annulus     a, b                  uniform on a <= |z| <= b
        gaussian    variance              isotropic normal
        lattice_nn  -                     1/(2d) on each unit lattice vector
        pointwise   -                     unit atom at z = 0 (lattice competition)
        tabulated   r_grid, values        piecewise-linear radial profile
    """

    shape: str
    params: tuple = ()
    mass: float = 1.0
    d: int = 1
    _enc: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise BadKernel(f"unknown kernel shape {self.shape!r}")
        p = self.params
        if self.shape == "tophat" and not (len(p) == 1 and p[0] > 0):
            raise BadKernel("tophat needs a positive radius")
        if self.shape == "annulus" and not (len(p) == 2 and 0 <= p[0] < p[1]):
            raise BadKernel("annulus needs 0 <= a < b")
        if self.shape == "gaussian" and not (len(p) == 1 and p[0] > 0):
            raise BadKernel("gaussian needs a positive variance")
        if self.shape == "tabulated":
            r, v = (np.asarray(a, dtype=float) for a in p)
            if r.ndim != 1 or len(r) < 2 or r[0] != 0 or np.any(np.diff(r) <= 0):
                raise BadKernel("tabulated kernel needs an increasing radial grid starting at 0")
            if len(v) != len(r) or np.any(v < 0) or not np.any(v > 0):
                raise BadKernel("tabulated values must be nonnegative and not all zero")
            object.__setattr__(self, "params", (r, v))
        if self.mass < 0:
            raise BadKernel("kernel mass must be nonnegative")
        if self.shape == "lattice_nn" and self.d > 3:
            raise BadKernel("lattice kernels support d <= 3")
        object.__setattr__(self, "_enc", self._encode())

    # constructors -----------------------------------------------------
    @classmethod
    def tophat(cls, radius, mass=1.0, d=1):
        return cls("tophat", (float(radius),), float(mass), d)

    @classmethod
    def annulus(cls, a, b, mass=1.0, d=1):
        return cls("annulus", (float(a), float(b)), float(mass), d)

    @classmethod
    def gaussian(cls, variance, mass=1.0, d=1):
        return cls("gaussian", (float(variance),), float(mass), d)

    @classmethod
    def indicator(cls, radius, height=1.0, d=1):
        """``height * 1{|z| <= radius}`` (mass chosen accordingly)."""
        return cls.tophat(radius, height * ball_volume(radius, d), d)

    # properties -------------------------------------------------------
    @property
    def code(self) -> int:
        return SHAPES[self.shape]

    @property
    def atomic(self) -> bool:
        return self.shape in ("lattice_nn", "pointwise")

    @property
    def support_radius(self) -> float:
        if self.shape == "tophat":
            return self.params[0]
        if self.shape == "annulus":
            return self.params[1]
        if self.shape == "gaussian":
            return np.inf
        if self.shape == "lattice_nn":
            return 1.0
        if self.shape == "pointwise":
            return 0.0
        r, v = self.params
        return float(r[np.nonzero(v)[0][-1] + 1] if np.nonzero(v)[0][-1] + 1 < len(r) else r[-1])

    @property
    def sup(self) -> float:
        """Exact supremum of ``K``."""
        return float(_radial_pdf_max(self._enc) * self.mass)

    def encode(self) -> np.ndarray:
        return self._enc

    def _encode(self) -> np.ndarray:
        d = self.d
        if self.shape == "tabulated":
            r, v = self.params
            norm = _radial_mass(r, v, d)
            pdf = v / norm
            seg = _segment_masses(r, pdf, d)
            cum = np.concatenate([[0.0], np.cumsum(seg)])
            cum /= cum[-1]
            n = len(r)
            out = np.zeros(_HEADER + 3 * n + 1)
            out[:_HEADER] = (TABULATED, self.mass, d, 0.0, 0.0, n)
            out[_HEADER:_HEADER + n] = r
            out[_HEADER + n:_HEADER + 2 * n] = pdf
            out[_HEADER + 2 * n:] = cum
            return out
        p0 = self.params[0] if len(self.params) > 0 else 0.0
        p1 = self.params[1] if len(self.params) > 1 else 0.0
        # density value inside the support, so the compiled side avoids pow/division
        if self.shape == "tophat":
            c = 1.0 / ball_volume(p0, d)
        elif self.shape == "annulus":
            c = 1.0 / (ball_volume(p1, d) - ball_volume(p0, d))
        elif self.shape == "gaussian":
            c = (2.0 * np.pi * p0) ** (-0.5 * d)
        elif self.shape == "lattice_nn":
            c = 1.0 / (2.0 * d)
        else:
            c = 1.0
        return np.array([self.code, self.mass, d, p0, p1, c])

    # evaluation -------------------------------------------------------
    def __call__(self, z) -> np.ndarray:
        """Kernel value at displacement(s) ``z`` (shape ``(n, d)``, or ``(n,)`` when d=1)."""
        z = np.asarray(z, dtype=float)
        scalar = z.ndim == 0 or (z.ndim == 1 and self.d > 1)
        z2 = z.reshape(-1, self.d)
        out = _eval_many(self._enc, z2)
        return float(out[0]) if scalar else out

    def pdf(self, z):
        if self.mass == 0:
            raise BadKernel("zero-mass kernel has no density")
        return self(z) / self.mass

    def sample(self, stream, size: int) -> np.ndarray:
        """Draw ``size`` displacements from the normalized kernel."""
        out = np.empty((size, self.d))
        _sample_many(self._enc, self.d, stream.state, out)
        return out

    def cdf1d(self, x):
        """CDF of the normalized kernel along the line (d=1 only)."""
        if self.d != 1:
            raise ValueError("cdf1d is defined for d=1 kernels only")
        x = np.asarray(x, dtype=float)
        s = self.shape
        if s == "tophat":
            r = self.params[0]
            return np.clip((x + r) / (2 * r), 0.0, 1.0)
        if s == "annulus":
            a, b = self.params
            w = 2 * (b - a)
            left = np.clip(x + b, 0.0, b - a)
            right = np.clip(x - a, 0.0, b - a)
            return (left + right) / w
        if s == "gaussian":
            return special.ndtr(x / np.sqrt(self.params[0]))
        if s == "tabulated":
            r, _ = self.params
            pdf = self._enc[_HEADER + len(r):_HEADER + 2 * len(r)]
            ax = np.abs(x)
            # half-line cumulative of a piecewise-linear density
            seg = 0.5 * (pdf[1:] + pdf[:-1]) * np.diff(r)
            cum = np.concatenate([[0.0], np.cumsum(seg)])
            k = np.clip(np.searchsorted(r, ax, side="right") - 1, 0, len(r) - 2)
            dr = np.clip(ax - r[k], 0.0, r[k + 1] - r[k])
            slope = (pdf[k + 1] - pdf[k]) / (r[k + 1] - r[k])
            part = cum[k] + pdf[k] * dr + 0.5 * slope * dr**2
            part = np.where(ax >= r[-1], cum[-1], part)
            return 0.5 + np.sign(x) * part
        if s == "lattice_nn":
            return np.where(x < -1, 0.0, np.where(x < 1, 0.5, 1.0))
        return np.where(x < 0, 0.0, 1.0)

    def breakpoints_1d(self) -> np.ndarray:
        """Points where the 1-D density is not smooth (or, for gaussians, a finite cover)."""
        s = self.shape
        if s == "tophat":
            r = self.params[0]
            return np.array([-r, r])
        if s == "annulus":
            a, b = self.params
            return np.array([-b, -a, a, b])
        if s == "gaussian":
            sd = np.sqrt(self.params[0])
            return sd * np.array([-9.0, -6, -4, -2.5, -1.25, 0, 1.25, 2.5, 4, 6, 9])
        if s == "tabulated":
            r, _ = self.params
            return np.concatenate([-r[::-1], r[1:]])
        raise ValueError("atomic kernels have no density")

    def numeric_mass(self) -> float:
        """Mass by adaptive quadrature (atomic kernels: exact)."""
        if self.atomic:
            return self.mass
        if self.d == 1:
            bp = self.breakpoints_1d()
            f = lambda x: float(self(np.array([x]))[0])  # noqa: E731
            total = 0.0
            for lo, hi in zip(bp[:-1], bp[1:]):
                total += integrate.quad(f, lo, hi, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
            if self.shape == "gaussian":
                total += 2 * integrate.quad(f, bp[-1], np.inf, epsabs=1e-14)[0]
            return total
        # radial integral: surface area of the unit sphere times r^{d-1}
        area = 2 * np.pi ** (self.d / 2) / _gamma_fn(self.d / 2)
        e = np.zeros(self.d)

        def g(r):
            e[0] = r
            return float(self(e[None, :])[0]) * r ** (self.d - 1)

        R = self.support_radius
        if np.isinf(R):
            R = 12 * np.sqrt(self.params[0])
        pts = None
        if self.shape == "annulus":
            pts = [self.params[0]]
        elif self.shape == "tabulated":
            pts = list(self.params[0][1:-1])
        val = integrate.quad(g, 0.0, R, points=pts, limit=400, epsabs=1e-13, epsrel=1e-12)[0]
        return area * val

    def to_dict(self) -> dict:
        params = [np.asarray(p).tolist() for p in self.params]
        return {"shape": self.shape, "params": params, "mass": self.mass}


def _radial_mass(r, v, d):
    return float(np.sum(_segment_masses(r, v, d)))


def _segment_masses(r, v, d):
    """Mass of each radial segment of a piecewise-linear profile in R^d."""
    x, w = np.polynomial.legendre.leggauss(6)
    a, b = r[:-1, None], r[1:, None]
    rr = 0.5 * (b - a) * x + 0.5 * (a + b)
    vv = v[:-1, None] + (v[1:, None] - v[:-1, None]) * (rr - a) / (b - a)
    area = 2 * np.pi ** (d / 2) / _gamma_fn(d / 2)
    if d == 1:
        area = 2.0
    return area * 0.5 * (b - a)[:, 0] * np.sum(w * vv * rr ** (d - 1), axis=1)


# ---------------------------------------------------------------------------
# compiled evaluation and sampling


@numba.njit(inline="always", cache=True)
def _tab_find(kp, base, n, r):
    """Largest k with grid[k] <= r (binary search on kp[base:base+n])."""
    lo, hi = 0, n - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if kp[base + mid] <= r:
            lo = mid
        else:
            hi = mid
    return lo


@numba.njit(inline="always", cache=True)
def _tab_pdf(kp, r):
    n = int(kp[5])
    if r >= kp[_HEADER + n - 1]:
        return 0.0
    k = _tab_find(kp, _HEADER, n, r)
    r0 = kp[_HEADER + k]
    r1 = kp[_HEADER + k + 1]
    p0 = kp[_HEADER + n + k]
    p1 = kp[_HEADER + n + k + 1]
    return p0 + (r - r0) / (r1 - r0) * (p1 - p0)


@numba.njit(inline="always", cache=True)
def radial_pdf(kp, r2):
    """Normalized density at squared radius ``r2``.

    Lattice shapes only ever see integer displacements, for which ``r2 = 1``
    identifies the nearest neighbours.
    """
    code = int(kp[0])
    if code == TOPHAT:
        return kp[5] if r2 <= kp[3] * kp[3] else 0.0
    if code == ANNULUS:
        return kp[5] if kp[3] * kp[3] <= r2 <= kp[4] * kp[4] else 0.0
    if code == GAUSSIAN:
        return kp[5] * np.exp(-0.5 * r2 / kp[3])
    if code == LATTICE_NN:
        return kp[5] if r2 == 1.0 else 0.0
    if code == POINTWISE:
        return 1.0 if r2 == 0.0 else 0.0
    return _tab_pdf(kp, np.sqrt(r2))


@numba.njit(inline="always", cache=True)
def k_eval(kp, z):
    r2 = 0.0
    for k in range(z.shape[0]):
        r2 += z[k] * z[k]
    return kp[1] * radial_pdf(kp, r2)


@numba.njit(cache=True)
def _radial_pdf_max(kp):
    code = int(kp[0])
    if code == ANNULUS:
        return radial_pdf(kp, kp[3] * kp[3])
    if code == LATTICE_NN:
        return radial_pdf(kp, 1.0)
    if code == TABULATED:
        n = int(kp[5])
        best = 0.0
        for k in range(n):
            best = max(best, kp[_HEADER + n + k])
        return best
    return radial_pdf(kp, 0.0)


@numba.njit(cache=True)
def _eval_many(kp, z):
    out = np.empty(z.shape[0])
    for i in range(z.shape[0]):
        out[i] = k_eval(kp, z[i])
    return out


@numba.njit(cache=True)
def _random_direction(s, d, out):
    if d == 1:
        out[0] = 1.0 if uniform_open(s) < 0.5 else -1.0
        return
    norm = 0.0
    for k in range(d):
        out[k] = normal(s)
        norm += out[k] * out[k]
    norm = np.sqrt(norm)
    for k in range(d):
        out[k] /= norm


@numba.njit(cache=True)
def k_sample(kp, d, s, out):
    """Fill ``out`` with a draw from the normalized kernel."""
    code = int(kp[0])
    if code == GAUSSIAN:
        sd = np.sqrt(kp[3])
        for k in range(d):
            out[k] = sd * normal(s)
        return
    if code == LATTICE_NN:
        for k in range(d):
            out[k] = 0.0
        j = randint(s, 2 * d)
        out[j // 2] = 1.0 if j % 2 == 0 else -1.0
        return
    if code == POINTWISE:
        for k in range(d):
            out[k] = 0.0
        return
    if code == TOPHAT or code == ANNULUS:
        a = 0.0 if code == TOPHAT else kp[3]
        b = kp[3] if code == TOPHAT else kp[4]
        u = uniform_open(s)
        # radius with density proportional to r^{d-1} on [a, b]
        r = (a**d + u * (b**d - a**d)) ** (1.0 / d)
        _random_direction(s, d, out)
        for k in range(d):
            out[k] *= r
        return
    # tabulated: pick a segment by mass, then rejection inside it
    n = int(kp[5])
    pb = _HEADER + n
    cb = _HEADER + 2 * n
    k = _tab_find(kp, cb, n, uniform_open(s))
    if k > n - 2:
        k = n - 2
    r0 = kp[_HEADER + k]
    r1 = kp[_HEADER + k + 1]
    p0 = kp[pb + k]
    p1 = kp[pb + k + 1]
    top = max(p0, p1) * r1 ** (d - 1)
    r = r0
    while True:
        r = r0 + uniform_open(s) * (r1 - r0)
        val = (p0 + (r - r0) / (r1 - r0) * (p1 - p0)) * r ** (d - 1)
        if uniform_open(s) * top <= val:
            break
    _random_direction(s, d, out)
    for j in range(d):
        out[j] *= r


@numba.njit(cache=True)
def _sample_many(kp, d, s, out):
    buf = np.empty(d)
    for i in range(out.shape[0]):
        k_sample(kp, d, s, buf)
        out[i, :] = buf
