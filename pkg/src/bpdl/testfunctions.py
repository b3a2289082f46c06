"""Test functions ``f`` on space, outer maps ``F``, and a breakpoint-aware quadrature."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import QuadratureFail


@dataclass(frozen=True)
class TestFunction:
    """Function ``f`` on R^d from a small catalog.

    ``constant``   value c
    ``indicator``  c * 1{lo <= x <= hi} (axis-aligned box)
    ``triangle``   c * max(0, 1 - |x - center| / halfwidth) (d=1) / product form
    ``cosine``     c * cos(2 pi k x / L) (periodic observable, d=1)
    """

    __test__ = False  # not a pytest class

    kind: str
    params: tuple = ()
    scale: float = 1.0

    @classmethod
    def constant(cls, c=1.0):
        return cls("constant", (), float(c))

    @classmethod
    def indicator(cls, lo, hi, c=1.0):
        return cls("indicator", (tuple(np.atleast_1d(lo).astype(float)), tuple(np.atleast_1d(hi).astype(float))),
                   float(c))

    @classmethod
    def triangle(cls, center=0.0, halfwidth=1.0, c=1.0):
        return cls("triangle", (tuple(np.atleast_1d(center).astype(float)), float(halfwidth)), float(c))

    @classmethod
    def cosine(cls, L, k=1, c=1.0):
        return cls("cosine", (float(L), int(k)), float(c))

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim <= 1:
            x = x.reshape(-1, 1) if x.ndim == 1 else x.reshape(1, 1)
        k = self.kind
        if k == "constant":
            out = np.ones(len(x))
        elif k == "indicator":
            lo, hi = (np.asarray(a) for a in self.params)
            out = np.all((x >= lo) & (x <= hi), axis=1).astype(float)
        elif k == "triangle":
            c, w = np.asarray(self.params[0]), self.params[1]
            out = np.prod(np.clip(1.0 - np.abs(x - c) / w, 0.0, None), axis=1)
        elif k == "cosine":
            L, m = self.params
            out = np.cos(2 * np.pi * m * x[:, 0] / L)
        else:
            raise ValueError(f"unknown test function kind {k!r}")
        return self.scale * out

    @property
    def is_zero(self) -> bool:
        return self.scale == 0.0

    def support(self):
        """Bounding box ``(lo, hi)`` of the support, or None if not compact."""
        if self.kind == "indicator":
            return np.asarray(self.params[0]), np.asarray(self.params[1])
        if self.kind == "triangle":
            c, w = np.asarray(self.params[0]), self.params[1]
            return c - w, c + w
        return None

    def breakpoints_1d(self) -> np.ndarray:
        if self.kind == "indicator":
            return np.array([self.params[0][0], self.params[1][0]])
        if self.kind == "triangle":
            c, w = self.params[0][0], self.params[1]
            return np.array([c - w, c, c + w])
        return np.array([])

    def integral_1d(self, L: float | None = None) -> float:
        """``int f dx`` on the line (or over one period for ``cosine``/``constant`` on a torus of side L)."""
        if self.kind == "indicator":
            return self.scale * (self.params[1][0] - self.params[0][0])
        if self.kind == "triangle":
            return self.scale * self.params[1]
        if self.kind == "cosine":
            return 0.0
        if L is None:
            raise ValueError("constant has no finite integral on the line")
        return self.scale * L

    def to_dict(self):
        return {"kind": self.kind, "params": list(self.params), "scale": self.scale}


@dataclass(frozen=True)
class OuterMap:
    """Bounded smooth ``F`` in ``phi(nu) = F(<nu, f>)``."""

    kind: str
    K: float = 10.0

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "identity":
            return u
        if self.kind == "min":
            return np.minimum(u, self.K)
        if self.kind == "ratio":
            return u / (1.0 + u)
        if self.kind == "arctan":
            return np.arctan(u / self.K)
        if self.kind == "constant":
            return np.full_like(u, self.K)
        raise ValueError(f"unknown outer map {self.kind!r}")

    def to_dict(self):
        return {"kind": self.kind, "K": self.K}


_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gl(m):
    if m not in _GL_CACHE:
        _GL_CACHE[m] = np.polynomial.legendre.leggauss(m)
    return _GL_CACHE[m]


def adaptive_quad(g, a: float, b: float, breakpoints=(), tol: float = 1e-8, m: int = 10,
                  max_depth: int = 40) -> float:
    """Integrate a vectorized ``g`` over ``[a, b]``.

    The interval is first split at every breakpoint inside it; each piece
    is integrated with Gauss-Legendre rules of order ``m`` and ``2m`` and
    bisected while they disagree by more than the local share of ``tol``.

    Raises
    ------
    QuadratureFail
        A piece still disagrees after ``max_depth`` bisections.
    """
    if b <= a:
        return 0.0
    pts = np.unique(np.concatenate([[a, b], [p for p in np.asarray(breakpoints, dtype=float) if a < p < b]]))
    x1, w1 = _gl(m)
    x2, w2 = _gl(2 * m)
    total = 0.0
    L = b - a
    stack = [(lo, hi, 0) for lo, hi in zip(pts[:-1], pts[1:])]
    while stack:
        lo, hi, depth = stack.pop()
        c, r = 0.5 * (lo + hi), 0.5 * (hi - lo)
        q1 = r * np.dot(w1, g(c + r * x1))
        q2 = r * np.dot(w2, g(c + r * x2))
        if abs(q2 - q1) <= max(tol * (hi - lo) / L, 1e-15 * abs(q2)):
            total += q2
        elif depth >= max_depth:
            raise QuadratureFail(f"no convergence on [{lo:.6g}, {hi:.6g}] after {depth} bisections")
        else:
            stack.append((lo, c, depth + 1))
            stack.append((c, hi, depth + 1))
    return float(total)


def adaptive_quad_batch(g, lo, hi, width, tol: float = 1e-8, m: int = 10, max_depth: int = 40) -> np.ndarray:
    """Integrate ``g`` over many intervals at once.

    ``g(z, k)`` is evaluated on node arrays ``z`` with ``k`` the index of the
    interval each node belongs to.  Interval ``k`` is accepted when the
    order-``m`` and order-``2m`` rules agree to ``tol * (hi - lo) / width[k]``;
    the others are bisected, all in one vectorized pass per level.

    Raises
    ------
    QuadratureFail
        An interval still disagrees after ``max_depth`` bisections.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    width = np.broadcast_to(np.asarray(width, dtype=float), lo.shape)
    out = np.zeros(len(lo))
    x1, w1 = _gl(m)
    x2, w2 = _gl(2 * m)
    xs = np.concatenate([x1, x2])
    owner = np.arange(len(lo))
    a, b = lo, hi
    for depth in range(max_depth + 1):
        if len(a) == 0:
            return out
        c, r = 0.5 * (a + b), 0.5 * (b - a)
        z = (c[:, None] + r[:, None] * xs[None, :]).ravel()
        v = np.asarray(g(z, np.repeat(owner, len(xs))), dtype=float).reshape(len(a), len(xs))
        q1 = r * (v[:, :m] @ w1)
        q2 = r * (v[:, m:] @ w2)
        ok = np.abs(q2 - q1) <= np.maximum(tol * (b - a) / width[owner], 1e-15 * np.abs(q2))
        np.add.at(out, owner[ok], q2[ok])
        bad = ~ok
        owner = np.repeat(owner[bad], 2)
        a, b, c = a[bad], b[bad], c[bad]
        a, b = np.stack([a, c], 1).ravel(), np.stack([c, b], 1).ravel()
    lo_bad = a[0]
    raise QuadratureFail(f"no convergence near {lo_bad:.6g} after {max_depth} bisections")
