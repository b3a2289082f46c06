"""Spatial domains: unbounded space, flat torus, box with absorbing edge, lattice."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

UNBOUNDED, TORUS, BOX, LATTICE = 0, 1, 2, 3
_MODES = {"unbounded": UNBOUNDED, "torus": TORUS, "box": BOX, "lattice": LATTICE}


@dataclass(frozen=True)
class SpatialDomain:
    """Where individuals live.

    Torus and lattice domains are periodic and centred on the origin: each
    axis covers ``[-L/2, L/2)``.  For the lattice, ``L`` is the number of
    sites per axis and positions are integer-valued floats.  A box keeps
    ``bounds = ((lo_1, hi_1), ...)``; seeds dispersed outside it are lost.
    """

    mode: str = "unbounded"
    d: int = 1
    side: tuple = ()
    bounds: tuple = ()

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ValueError(f"unknown domain mode {self.mode!r}")
        if self.d < 1:
            raise ValueError("dimension must be a positive integer")
        if self.mode in ("torus", "lattice"):
            side = self.side if isinstance(self.side, (tuple, list)) else (self.side,)
            if len(side) == 1:
                side = tuple(side) * self.d
            if len(side) != self.d or any(s <= 0 for s in side):
                raise ValueError("torus side must be positive on every axis")
            if self.mode == "lattice" and any(float(s) != int(s) for s in side):
                raise ValueError("lattice side must be an integer number of sites")
            object.__setattr__(self, "side", tuple(float(s) for s in side))
        if self.mode == "box":
            b = tuple(tuple(map(float, ab)) for ab in self.bounds)
            if len(b) == 1 and self.d > 1:
                b = b * self.d
            if len(b) != self.d or any(lo >= hi for lo, hi in b):
                raise ValueError("box bounds must be ordered (lo < hi) on every axis")
            object.__setattr__(self, "bounds", b)

    @classmethod
    def torus(cls, side, d=1):
        return cls("torus", d, side=side)

    @classmethod
    def box(cls, bounds, d=1):
        return cls("box", d, bounds=bounds)

    @classmethod
    def lattice(cls, side, d=1):
        return cls("lattice", d, side=side)

    @property
    def code(self) -> int:
        return _MODES[self.mode]

    @property
    def periodic(self) -> bool:
        return self.mode in ("torus", "lattice")

    @property
    def volume(self) -> float:
        if self.periodic:
            return float(np.prod(self.side))
        if self.mode == "box":
            return float(np.prod([hi - lo for lo, hi in self.bounds]))
        return float("inf")

    def window(self):
        """(lo, hi) arrays of the bounded region, or None when unbounded."""
        if self.periodic:
            half = np.asarray(self.side) / 2.0
            return -half, half
        if self.mode == "box":
            b = np.asarray(self.bounds)
            return b[:, 0].copy(), b[:, 1].copy()
        return None

    def wrap(self, x):
        """Map positions into the canonical cell (identity unless periodic)."""
        x = np.asarray(x, dtype=float)
        if not self.periodic:
            return x
        L = np.asarray(self.side)
        return x - L * np.floor((x + L / 2.0) / L)

    def displacement(self, x, y):
        """y - x, using the minimal image on periodic domains."""
        z = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
        if self.periodic:
            L = np.asarray(self.side)
            z = z - L * np.round(z / L)
        return z

    def contains(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.mode == "box":
            b = np.asarray(self.bounds)
            return np.all((x >= b[:, 0]) & (x <= b[:, 1]), axis=1)
        return np.ones(len(x), dtype=bool)

    def encode(self) -> np.ndarray:
        """Flat array for the compiled engines: [mode, d, L_1..L_d, lo_1..lo_d, hi_1..hi_d]."""
        out = np.zeros(2 + 3 * self.d)
        out[0], out[1] = self.code, self.d
        if self.periodic:
            out[2:2 + self.d] = self.side
            out[2 + self.d:2 + 2 * self.d] = -np.asarray(self.side) / 2
            out[2 + 2 * self.d:] = np.asarray(self.side) / 2
        elif self.mode == "box":
            b = np.asarray(self.bounds)
            out[2:2 + self.d] = b[:, 1] - b[:, 0]
            out[2 + self.d:2 + 2 * self.d] = b[:, 0]
            out[2 + 2 * self.d:] = b[:, 1]
        return out

    def to_dict(self) -> dict:
        out = {"mode": self.mode, "d": self.d}
        if self.periodic:
            out["side"] = list(self.side)
        if self.mode == "box":
            out["bounds"] = [list(b) for b in self.bounds]
        return out
