"""Statistical suites built on the simulator: engine equivalence, martingale
and first-moment checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from ..domain import SpatialDomain
from ..kernels import Kernel
from ..model import ModelParams, RateField, make_params
from ..simulator import FleetSpec, run_replicates
from ..statistics import martingale_summary, martingale_value, moment_residual
from ..testfunctions import TestFunction
from .figures import reference_params


# ---------------------------------------------------------------------------
# engine equivalence


def _bump(x):
    return 3.0 + 2.0 * np.cos(2 * np.pi * x[..., 0] / 10.0)


def equivalence_presets() -> dict:
    """Three parameter sets exercising different code paths of the engines."""
    ref = reference_params(20.0)
    field = RateField.from_callable(_bump, [-5.0], [5.0], 256)
    smooth = make_params(field, 1.0, 0.5, Kernel.gaussian(0.25), Kernel.gaussian(1.0),
                         domain=SpatialDomain.torus(10.0))
    box = make_params(4.0, 1.0, 1.0, Kernel.indicator(0.5), Kernel.tophat(2.0),
                      domain=SpatialDomain.box([(-5.0, 5.0)]))
    return {
        "reference-L20": (ref, np.zeros((1, 1))),
        "smooth-varying-birth": (smooth, np.linspace(-4.5, 4.5, 10)[:, None]),
        "box-lost-seeds": (box, np.linspace(-4.0, 4.0, 5)[:, None]),
    }


@dataclass
class EquivalenceResult:
    label: str
    statistic: float
    pvalue: float
    mean_faithful: float
    mean_indexed: float
    extinct_faithful: float
    extinct_indexed: float
    replicates: int

    @property
    def passed(self) -> bool:
        return self.pvalue > 0.01

    def to_dict(self):
        return {**self.__dict__, "passed": self.passed}


def engine_equivalence(params: ModelParams, initial, T: float = 10.0, replicates: int = 500, seed: int = 0,
                       label: str = "", threads: int | None = None) -> EquivalenceResult:
    """Two-sample KS test on the count at ``T`` for the faithful and indexed engines.

    The two fleets use disjoint seeds so the samples are independent.
    """
    out = {}
    for k, eng in enumerate(("faithful", "indexed")):
        spec = FleetSpec(params, initial, T, seed + k, engine=eng)
        out[eng] = np.array([tr.count[-1] for tr in run_replicates(spec, replicates, threads)])
    a, b = out["faithful"], out["indexed"]
    ks = stats.ks_2samp(a, b)
    return EquivalenceResult(label, float(ks.statistic), float(ks.pvalue), float(a.mean()), float(b.mean()),
                             float(np.mean(a == 0)), float(np.mean(b == 0)), replicates)


# ---------------------------------------------------------------------------
# martingale suite


class _MartingaleReducer:
    def __init__(self, fs, params, t):
        self.fs, self.params, self.t = fs, params, t

    def __call__(self, tr):
        return np.array([martingale_value(tr.lineage, self.t, self.params, f) for f in self.fs])


@dataclass
class MartingaleSuite:
    labels: list
    reports: list

    def passed_one(self, r) -> bool:
        return r.mean_ok and r.ratio is not None and 0.8 <= r.ratio <= 1.2

    @property
    def passed(self) -> bool:
        return all(self.passed_one(r) for r in self.reports)

    def to_dict(self):
        return {lab: {**r.to_dict(), "passed": self.passed_one(r)} for lab, r in zip(self.labels, self.reports)} | {
            "passed": self.passed}


def martingale_suite(params: ModelParams | None = None, initial=None, t: float = 2.0, replicates: int = 10_000,
                     seed: int = 0, fs: dict | None = None, threads: int | None = None) -> MartingaleSuite:
    """Mean of ``M_t^f`` and the ratio ``Var(M_t^f) / E<M^f>_t`` for each test function."""
    params = params or reference_params(40.0)
    initial = np.zeros((1, params.d)) if initial is None else initial
    fs = fs or {"one": TestFunction.constant(1.0), "tophat[-1,1]": TestFunction.indicator(-1.0, 1.0)}
    labels = list(fs)
    spec = FleetSpec(params, initial, t, seed, record_lineage=True,
                     reducer=_MartingaleReducer([fs[k] for k in labels], params, t), keep_lineage=False)
    vals = np.array([tr.summary for tr in run_replicates(spec, replicates, threads)])
    reports = [martingale_summary(vals[:, k, 0], vals[:, k, 1], t) for k in range(len(labels))]
    return MartingaleSuite(labels, reports)


# ---------------------------------------------------------------------------
# first-moment equation


@dataclass
class MomentSuite:
    residuals: list

    @property
    def passed(self) -> bool:
        return all(r.contains_zero for r in self.residuals)

    def to_dict(self):
        return {"residuals": [r.to_dict() for r in self.residuals], "passed": self.passed}


def moment_suite(params: ModelParams | None = None, initial=None, times=(1.0, 5.0, 25.0), h: float = 0.02,
                 replicates: int = 10_000, seed: int = 0, n_boot: int = 1000, threads: int | None = None):
    """Residual of the per-unit-volume first-moment equation at each time, with bootstrap CIs."""
    params = params or reference_params(10.0)
    initial = np.zeros((1, params.d)) if initial is None else initial
    snaps = sorted({round(s, 12) for t in times for s in (t - h, t, t + h)})
    spec = FleetSpec(params, initial, max(snaps), seed, snapshot_times=tuple(snaps), keep_positions=True)
    traces = run_replicates(spec, replicates, threads)
    return MomentSuite([moment_residual(traces, t, h, params, n_boot=n_boot, seed=seed) for t in times])
