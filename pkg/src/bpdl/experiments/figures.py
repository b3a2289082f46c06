"""Reference runs for the one-dimensional logistic example: density profiles,
window counts and interaction load."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..domain import SpatialDomain
from ..kernels import Kernel
from ..model import ModelParams, make_params
from ..simulator import FleetSpec, Trace, run_replicates
from ..statistics import density_histogram, time_average


def reference_params(L: float = 40.0, gamma: float = 5.0, mu: float = 1.0, alpha: float = 1.0) -> ModelParams:
    """``U = 1{|x - y| <= 1/2}``, ``D`` uniform on ``[-3, 3]``, torus of side ``L``."""
    return make_params(gamma, mu, alpha, Kernel.indicator(0.5), Kernel.tophat(3.0),
                       domain=SpatialDomain.torus(L))


def surviving_runs(spec: FleetSpec, wanted: int, threads: int | None = None, batch: int | None = None,
                   max_tries: int = 100_000) -> tuple[list[Trace], int]:
    """First ``wanted`` replicates (in replicate-id order) alive at the end of the run.

    Returns the survivors and the number of replicates examined.  The
    selection depends only on the replicate ids, never on scheduling.
    """
    batch = batch or max(wanted, 16)
    kept, start = [], 0
    while len(kept) < wanted:
        if start >= max_tries:
            raise RuntimeError(f"only {len(kept)} of {wanted} replicates survived in {start} tries")
        for tr in run_replicates(spec, range(start, start + batch), threads):
            if not tr.extinct and len(kept) < wanted:
                kept.append(tr)
        start += batch
    last = kept[-1].replicate + 1
    return kept, last


@dataclass
class FigureRun:
    """Snapshots of a fleet started from ``n0`` individuals at the origin."""

    params: ModelParams
    n0: int
    traces: list
    examined: int
    times: np.ndarray
    window: tuple = (-5.0, 5.0)

    @property
    def survival_fraction(self) -> float:
        return len(self.traces) / self.examined

    def window_counts(self) -> np.ndarray:
        """(replicates, times) counts in the window."""
        lo, hi = self.window
        return np.array([[np.count_nonzero((p[:, 0] >= lo) & (p[:, 0] <= hi)) for p in tr.positions]
                         for tr in self.traces])

    def loads(self) -> np.ndarray:
        return np.array([tr.load for tr in self.traces])


def figure_run(n0: int = 1, replicates: int = 100, T: float = 25.0, dt: float = 0.1, seed: int = 0,
               L: float = 40.0, load_radius: float = 5.0, threads: int | None = None,
               params: ModelParams | None = None) -> FigureRun:
    params = params or reference_params(L)
    times = np.round(np.arange(0.0, T + dt / 2, dt), 12)
    init = np.zeros((n0, 1))
    spec = FleetSpec(params, init, T, seed, snapshot_times=tuple(times), keep_positions=True,
                     load_radius=load_radius)
    traces, examined = surviving_runs(spec, replicates, threads)
    return FigureRun(params, n0, traces, examined, times)


@dataclass
class ProfileCheck:
    """Binned intensity at two times and the flatness check at the later one."""

    edges: np.ndarray
    early: np.ndarray
    early_se: np.ndarray
    late: np.ndarray
    late_se: np.ndarray
    t_early: float
    t_late: float
    target: float
    tol: float
    inner: tuple = (-5.0, 5.0)
    extra: dict = field(default_factory=dict)

    @property
    def inner_bins(self) -> np.ndarray:
        mid = 0.5 * (self.edges[:-1] + self.edges[1:])
        return (mid >= self.inner[0]) & (mid <= self.inner[1])

    @property
    def rel_dev(self) -> np.ndarray:
        return self.late[self.inner_bins] / self.target - 1.0

    @property
    def passed(self) -> bool:
        return bool(np.all(np.abs(self.rel_dev) <= self.tol))

    def to_dict(self):
        return {"edges": self.edges.tolist(), "t_early": self.t_early, "t_late": self.t_late,
                "early": self.early.tolist(), "early_se": self.early_se.tolist(), "late": self.late.tolist(),
                "late_se": self.late_se.tolist(), "target": self.target, "tolerance": self.tol,
                "inner_rel_dev": self.rel_dev.tolist(), "mean_inner_intensity":
                float(self.late[self.inner_bins].mean()), "passed": self.passed, **self.extra}


def figure1(run: FigureRun, t_early: float = 3.0, t_late: float = 25.0, bin_width: float = 1.0,
            tol: float = 0.15) -> ProfileCheck:
    """Histogram of positions at ``t_early`` and ``t_late``; inner bins at ``t_late`` against ``c0``."""
    L = run.params.domain.side[0]
    edges = np.arange(-L / 2, L / 2 + bin_width / 2, bin_width)
    a = density_histogram(run.traces, t_early, edges)
    b = density_histogram(run.traces, t_late, edges)
    return ProfileCheck(edges, a.intensity, a.stderr, b.intensity, b.stderr, t_early, t_late, run.params.c0, tol,
                        extra={"replicates": len(run.traces), "examined": run.examined})


@dataclass
class AverageCheck:
    label: str
    mean: float
    stderr: float
    target: float
    tol: float
    t_lo: float
    t_hi: float
    n_replicates: int

    @property
    def rel_dev(self) -> float:
        return self.mean / self.target - 1.0

    @property
    def passed(self) -> bool:
        return abs(self.rel_dev) <= self.tol

    def to_dict(self):
        return {**self.__dict__, "rel_dev": self.rel_dev, "passed": self.passed}


def figure2(run: FigureRun, t_lo: float = 15.0, t_hi: float = 25.0, tol: float = 0.15) -> AverageCheck:
    """Time average of the window count against ``c0 |window|``."""
    v = time_average(run.traces, t_lo, t_hi, "count", window=run.window)
    target = run.params.c0 * (run.window[1] - run.window[0])
    return AverageCheck(f"window count from {run.n0} at 0", float(v.mean()), float(v.std(ddof=1) / np.sqrt(len(v))),
                        target, tol, t_lo, t_hi, len(v))


def figure3(run: FigureRun, radius: float = 5.0, t_lo: float = 15.0, t_hi: float = 25.0,
            tol: float = 0.20) -> AverageCheck:
    """Time average of the interaction load against ``2 r c0^2``."""
    v = time_average(run.traces, t_lo, t_hi, "load", params=run.params, radius=radius)
    target = 2 * radius * run.params.c0**2
    return AverageCheck("interaction load", float(v.mean()), float(v.std(ddof=1) / np.sqrt(len(v))), target, tol,
                        t_lo, t_hi, len(v))
