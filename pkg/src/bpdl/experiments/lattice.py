"""Survival on the lattice compared with a contact process."""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from ..domain import SpatialDomain
from ..kernels import Kernel
from ..model import Population, make_params
from ..rng import Stream, exponential, randint, uniform_open
from ..simulator import FleetSpec, run_replicates


def survival_condition(gamma: float, mu: float, alpha: float, d: int) -> bool:
    """``gamma 2^-d / (mu + alpha) > 2``."""
    return gamma * 2.0**-d / (mu + alpha) > 2.0


def lattice_params(gamma: float, mu: float, alpha: float, side: int, d: int = 1):
    """Lattice model: pointwise competition ``1{x = y}`` and nearest-neighbour dispersal."""
    dom = SpatialDomain.lattice(side, d)
    return make_params(gamma, mu, alpha, Kernel("pointwise", (), 1.0, d), Kernel("lattice_nn", (), 1.0, d),
                       domain=dom)


@numba.njit(cache=True)
def _contact_run(side, d, lam_d, lam_m, T, s, occ, sites, where, n0):
    """Contact process on a periodic box; returns (alive_at_T, extinction_time)."""
    n = n0
    t = 0.0
    while n > 0:
        rate = n * (2 * d * lam_d + lam_m)
        t += exponential(s, rate)
        if t > T:
            return True, np.inf
        k = randint(s, n)
        x = sites[k]
        u = uniform_open(s) * (2 * d * lam_d + lam_m)
        if u < lam_m:
            # recovery: swap-remove
            occ[x] = 0
            last = sites[n - 1]
            sites[k] = last
            where[last] = k
            where[x] = -1
            n -= 1
        else:
            j = int((u - lam_m) / lam_d)
            if j >= 2 * d:
                j = 2 * d - 1
            axis = j // 2
            step = 1 if j % 2 == 0 else -1
            stride = side**axis
            coord = (x // stride) % side
            nc = (coord + step) % side
            y = x + (nc - coord) * stride
            if occ[y] == 0:
                occ[y] = 1
                sites[n] = y
                where[y] = n
                n += 1
    return False, t


def contact_survival(side: int, d: int, lam_d: float, lam_m: float, T: float, replicates: int, seed: int = 0,
                     first_replicate: int = 0):
    """Fraction of contact-process runs alive at ``T`` from a single infected origin."""
    nsite = side**d
    alive = np.zeros(replicates, dtype=bool)
    times = np.full(replicates, np.inf)
    origin = 0
    for r in range(replicates):
        st = Stream(seed, first_replicate + r)
        occ = np.zeros(nsite, dtype=np.int64)
        sites = np.zeros(nsite, dtype=np.int64)
        where = np.full(nsite, -1, dtype=np.int64)
        occ[origin] = 1
        sites[0] = origin
        where[origin] = 0
        a, t = _contact_run(side, d, lam_d, lam_m, T, st.state, occ, sites, where, 1)
        alive[r], times[r] = a, t
    return alive, times


@dataclass
class SurvivalReport:
    condition: bool
    ratio: float
    bpdl_survival: float
    bpdl_stderr: float
    contact_survival: float
    contact_stderr: float
    replicates: int
    T: float
    side: int

    @property
    def dominates(self) -> bool:
        return self.bpdl_survival >= self.contact_survival - 3 * self.contact_stderr

    @property
    def passed(self) -> bool:
        return self.dominates and self.bpdl_survival > 0

    def to_dict(self):
        return {**self.__dict__, "survival_condition": self.condition, "dominates": self.dominates,
                "passed": self.passed}


def _se(p, n):
    return float(np.sqrt(max(p * (1 - p), 1.0 / n) / n))


def lattice_survival(gamma: float, mu: float, alpha: float, T: float, replicates: int, side: int = 32, d: int = 1,
                     n0: int = 1, seed: int = 0, threads: int | None = None) -> SurvivalReport:
    """Survival to ``T`` of the lattice model and of the contact process with
    ``lambda_d = gamma 2^-d`` and ``lambda_m = mu + alpha``, both started at the origin.

    The standard error uses ``max(p(1-p), 1/n)`` so an all-or-nothing outcome
    still carries a nonzero error bar.
    """
    params = lattice_params(gamma, mu, alpha, side, d)
    init = Population(np.zeros((n0, d)))
    spec = FleetSpec(params, init, T, seed, snapshot_times=(T,))
    traces = run_replicates(spec, replicates, threads)
    alive_b = np.array([tr.count[-1] > 0 for tr in traces])
    alive_c, _ = contact_survival(side, d, gamma * 2.0**-d, mu + alpha, T, replicates, seed + 1)
    pb, pc = float(alive_b.mean()), float(alive_c.mean())
    return SurvivalReport(survival_condition(gamma, mu, alpha, d), gamma * 2.0**-d / (mu + alpha), pb,
                          _se(pb, replicates), pc, _se(pc, replicates), replicates, T, side)
