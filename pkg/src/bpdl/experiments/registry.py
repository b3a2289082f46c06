"""Config-driven runners for the named experiments.

Each runner takes ``(cfg, seed, threads)`` and returns an
:class:`ExperimentResult`; every config key has a default, so an empty
config runs the reference study.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..config import Config, build_initial, build_kernel, build_params, build_test_functions
from ..errors import BadConfig, UnknownExperiment
from ..kernels import Kernel
from ..model import Population
from ..testfunctions import TestFunction
from . import extinction, lattice, scaling, stationarity, suites
from .figures import reference_params


@dataclass
class ExperimentResult:
    name: str
    summary: dict
    passed: bool
    tables: dict = field(default_factory=dict)  # file stem -> (header, rows)


def _params_or(cfg: Config, default):
    return build_params(cfg, "model") if cfg.has("model") else default


def _initial_or(cfg: Config, d: int, default):
    return build_initial(cfg, d, "initial") if cfg.has("initial") else default


# ---------------------------------------------------------------------------


def _cosine_shape(amplitude: float, L: float, k: int):
    return lambda x: 1.0 + amplitude * np.cos(2 * np.pi * k * x[:, 0] / L)


def _plan(cfg: Config, regime: str) -> scaling.ScalingPlan:
    d_ladder = (50, 100, 200, 400) if regime == "C1" else (12, 25, 50, 100, 200)
    ladder = [int(n) for n in cfg.numbers("ladder", list(d_ladder))]
    L = cfg.number("L", 4.0, positive=True)
    U = build_kernel(cfg, "U", 1) if cfg.has("U") else Kernel.indicator(0.5)
    D = None
    if regime == "C1":
        D = build_kernel(cfg, "D", 1) if cfg.has("D") else Kernel.tophat(1.0)
    amp = cfg.number("xi0.amplitude", 0.5 if regime == "C1" else 0.0)
    if abs(amp) >= 1:
        cfg.fail("amplitude must be below 1 in absolute value", "xi0.amplitude")
    fs = build_test_functions(cfg, "observables", {"one": TestFunction.constant(1.0)} if regime == "C1" else
                              {"one": TestFunction.constant(1.0), "box[-1,1]": TestFunction.indicator(-1.0, 1.0)})
    try:
        plan = scaling.ScalingPlan(
            ladder=tuple(ladder), regime=regime,
            gamma=cfg.number("gamma", 2.0 if regime == "C1" else 1.0, positive=True),
            mu=cfg.number("mu", 1.0, nonneg=True),
            alpha=cfg.number("alpha", 1.0 if regime == "C1" else 2.0, nonneg=True),
            U=U, L=L, T=cfg.number("T", 2.0 if regime == "C1" else 1.0, positive=True),
            replicates=cfg.integer("replicates", 200 if regime == "C1" else 1000, minimum=2),
            D=D, beta=cfg.number("beta", 2.0), sigma=cfg.number("sigma", 1.0, positive=True),
            xi0=_cosine_shape(amp, L, cfg.integer("xi0.k", 1)), observables=list(fs.values()),
            n_snap=cfg.integer("snapshots", 20, minimum=1), grid_n=cfg.integer("grid", 512, minimum=8))
    except ValueError as exc:
        cfg.fail(str(exc), "ladder")
    return plan, list(fs)


def run_scaling_c1(cfg: Config, seed: int, threads: int | None) -> ExperimentResult:
    plan, labels = _plan(cfg, "C1")
    tab = scaling.scaling_meanfield(plan, seed, threads)
    max_ratio = cfg.number("max_ratio", 0.45, positive=True)
    summary = tab.to_dict() | {"observables": labels, "max_ratio": max_ratio, "passed": tab.passed(max_ratio)}
    rows = [[n, *tab.rms[:, c]] for c, n in enumerate(tab.ladder)]
    return ExperimentResult("scaling-c1", summary, tab.passed(max_ratio),
                            {"rms": (["n", *[f"rms_{lab}" for lab in labels]], rows)})


def run_scaling_c2(cfg: Config, seed: int, threads: int | None) -> ExperimentResult:
    plan, labels = _plan(cfg, "C2")
    rep = scaling.scaling_superprocess(plan, seed, threads)
    rep.check_n = cfg.integer("check_n", 50)
    rows = []
    for c, n in enumerate(rep.ladder):
        row = [n]
        for a in range(len(labels)):
            row += [rep.finite_ratio[a, c], rep.finite_se[a, c], rep.limit_ratio[a, c], rep.limit_se[a, c]]
        rows.append(row)
    head = ["n"] + [f"{k}_{lab}" for lab in labels for k in ("finite", "finite_se", "limit", "limit_se")]
    return ExperimentResult("scaling-c2", rep.to_dict() | {"observables": labels}, rep.passed,
                            {"brackets": (head, rows)})


def run_stationarity(cfg: Config, seed: int, threads: int | None) -> ExperimentResult:
    g = cfg.number("gamma", 2.0, positive=True)
    a = cfg.number("alpha", 0.5, positive=True)
    lo, hi = cfg.number("annulus.a", 0.25, nonneg=True), cfg.number("annulus.b", 0.75, positive=True)
    if not lo < hi:
        cfg.fail("annulus needs a < b", "annulus")
    if lo == 0:
        cfg.fail("the competition kernel must vanish at 0, so a > 0", "annulus.a")
    R = cfg.integer("replicates", 10_000, minimum=2)
    inner = cfg.number("inner", 1.0, positive=True)
    battery = stationarity.default_battery(inner, cfg.number("K", 10.0, positive=True))
    params = stationarity.dbc_params(g, a, lo, hi)
    c0 = params.c0
    runs = {"dbc": (params, c0)}
    if cfg.get("controls", True):
        runs["broken_dbc"] = (stationarity.dbc_params(g, a, lo, hi, mu=cfg.number("control_mu", 0.5, positive=True)),
                              c0)
        runs["double_intensity"] = (params, 2 * c0)
    out, rows = {}, []
    for k, (label, (p, lam)) in enumerate(runs.items()):
        res = stationarity.stationarity_test(p, lam, R, battery, seed + k, inner)
        out[label] = {"intensity": lam, "results": [r.to_dict() for r in res]}
        rows += [[k, j, r.mean, r.stderr] for j, r in enumerate(res)]
    ok = all(r["contains_zero"] for r in out["dbc"]["results"])
    for label in ("broken_dbc", "double_intensity"):
        if label in out:
            excl = all(not r["contains_zero"] and r["mean"] < 0 for r in out[label]["results"])
            out[label]["excludes_zero"] = excl
            ok = ok and excl
    out.update(c0=c0, replicates=R, battery=[b[0] for b in battery], passed=ok)
    return ExperimentResult("stationarity", out, ok,
                            {"generator_means": (["run", "phi", "mean", "stderr"], rows)})


def run_slivnyak(cfg: Config, seed: int, threads: int | None) -> ExperimentResult:
    win = cfg.numbers("window", [-5.0, 5.0], length=2)
    lam = cfg.number("intensity", 4.0, positive=True)
    B = cfg.numbers("B", [-1.0, 1.0], length=2)
    R = cfg.integer("replicates", 10_000, minimum=2)
    res = [stationarity.slivnyak_check(win, lam, stationarity.PalmFunction(kind, *B), R, seed + k)
           for k, kind in enumerate(("zero", "indicator", "count"))]
    ok = all(r.agree and r.exact_ok is not False for r in res)
    rows = [[k, r.lhs, r.lhs_se, r.rhs, r.rhs_se, r.exact] for k, r in enumerate(res)]
    return ExperimentResult("slivnyak", {"results": [r.to_dict() for r in res], "replicates": R, "passed": ok}, ok,
                            {"slivnyak": (["h", "lhs", "lhs_se", "rhs", "rhs_se", "exact"], rows)})


def run_extinction(cfg: Config, seed: int, threads: int | None) -> ExperimentResult:
    from ..domain import SpatialDomain
    from ..model import make_params

    R = cfg.integer("replicates", 200, minimum=1)
    # subcritical: sup gamma < inf mu
    sub = make_params(cfg.number("subcritical.gamma", 1.0, nonneg=True), cfg.number("subcritical.mu", 2.0),
                      1.0, Kernel.indicator(0.5), Kernel.tophat(1.0), domain=SpatialDomain.torus(20.0))
    n0 = cfg.integer("subcritical.n0", 10, minimum=1)
    s = extinction.subcritical_extinction(sub, Population(np.zeros((n0, 1))), R, seed, threads)
    sub_ok = s.fraction == 1.0 and s.mean_time <= s.oracle_mean + 3 * s.stderr_time
    # compact torus
    L = cfg.number("compact.L", 2.0, positive=True)
    delta = cfg.number("compact.delta", 0.5, positive=True)
    cp = make_params(cfg.number("compact.gamma", 3.0), cfg.number("compact.mu", 1.0), cfg.number("compact.alpha", 1.0),
                     Kernel.indicator(delta), Kernel.tophat(cfg.number("compact.D_radius", 1.0, positive=True)),
                     domain=SpatialDomain.torus(L))
    c = extinction.compact_extinction(cp, Population(np.zeros((1, 1))), R, delta, 1.0, seed + 1, threads)
    compact_ok = c.fraction == 1.0 and bool(c.mass_bound_ok)
    # mass bound over a long horizon on a larger torus
    Lm = cfg.number("mass.L", 4.0, positive=True)
    mp = make_params(cfg.number("mass.gamma", 5.0), cfg.number("mass.mu", 1.0), cfg.number("mass.alpha", 1.0),
                     Kernel.indicator(delta), Kernel.tophat(3.0), domain=SpatialDomain.torus(Lm))
    m = extinction.mass_bound_run(mp, Population(np.zeros((1, 1))), cfg.integer("mass.replicates", 50, minimum=1),
                                  cfg.number("mass.horizon", 200.0, positive=True), delta, 1.0, seed + 2, threads)
    ok = sub_ok and compact_ok and m["passed"]
    summary = {"subcritical": s.to_dict() | {"passed": sub_ok}, "compact": c.to_dict() | {"passed": compact_ok},
               "mass_bound": m, "passed": ok}
    tables = {"subcritical_mass": (["t", "mean_mass"], [[t, v] for t, v in zip(s.mass_times, s.mean_mass)]),
              "compact_mass": (["t", "mean_mass"], [[t, v] for t, v in zip(c.mass_times, c.mean_mass)]),
              "mass_bound": (["t", "mean_mass"], [[t, v] for t, v in zip(m["times"], m["mean_mass"])])}
    return ExperimentResult("extinction", summary, ok, tables)


def run_lattice_survival(cfg: Config, seed: int, threads: int | None) -> ExperimentResult:
    g, mu, a = (cfg.number(k, v, nonneg=True) for k, v in (("gamma", 13.0), ("mu", 1.0), ("alpha", 2.0)))
    d = cfg.integer("d", 1, minimum=1)
    if d > 2:
        cfg.fail("lattice runs support d <= 2", "d")
    rep = lattice.lattice_survival(g, mu, a, cfg.number("T", 200.0, positive=True),
                                   cfg.integer("replicates", 50, minimum=1), cfg.integer("side", 32, minimum=3), d,
                                   cfg.integer("n0", 1, minimum=1), seed, threads)
    # below the survival threshold there is no claim to check
    ok = rep.passed if rep.condition else True
    return ExperimentResult("lattice-survival", rep.to_dict() | {"passed": ok}, ok)


def run_engine_equivalence(cfg: Config, seed: int, threads: int | None) -> ExperimentResult:
    R = cfg.integer("replicates", 500, minimum=2)
    T = cfg.number("T", 10.0, positive=True)
    res = [suites.engine_equivalence(p, init, T, R, seed + 2 * k, label, threads)
           for k, (label, (p, init)) in enumerate(suites.equivalence_presets().items())]
    ok = all(r.passed for r in res)
    rows = [[k, r.statistic, r.pvalue, r.mean_faithful, r.mean_indexed] for k, r in enumerate(res)]
    return ExperimentResult("engine-equivalence", {"presets": [r.to_dict() for r in res], "passed": ok}, ok,
                            {"ks": (["preset", "statistic", "pvalue", "mean_faithful", "mean_indexed"], rows)})


def run_martingale(cfg: Config, seed: int, threads: int | None) -> ExperimentResult:
    params = _params_or(cfg, reference_params(40.0))
    init = _initial_or(cfg, params.d, np.zeros((1, params.d)))
    fs = build_test_functions(cfg, "test_functions", {"one": TestFunction.constant(1.0),
                                                      "tophat[-1,1]": TestFunction.indicator(-1.0, 1.0)})
    suite = suites.martingale_suite(params, init, cfg.number("t", 2.0, positive=True),
                                    cfg.integer("replicates", 10_000, minimum=2), seed, fs, threads)
    rows = [[k, r.mean, r.stderr, np.nan if r.ratio is None else r.ratio] for k, r in enumerate(suite.reports)]
    return ExperimentResult("martingale", suite.to_dict(), suite.passed,
                            {"martingale": (["f", "mean", "stderr", "ratio"], rows)})


def run_moment(cfg: Config, seed: int, threads: int | None) -> ExperimentResult:
    params = _params_or(cfg, reference_params(10.0))
    init = _initial_or(cfg, params.d, np.zeros((1, params.d)))
    suite = suites.moment_suite(params, init, tuple(cfg.numbers("times", [1.0, 5.0, 25.0])),
                                cfg.number("h", 0.02, positive=True), cfg.integer("replicates", 10_000, minimum=2),
                                seed, cfg.integer("bootstrap", 1000, minimum=10), threads)
    rows = [[r.t, r.residual, r.ci[0], r.ci[1]] for r in suite.residuals]
    return ExperimentResult("moment", suite.to_dict(), suite.passed,
                            {"residuals": (["t", "residual", "ci_lo", "ci_hi"], rows)})


#: experiments named by the command line, in the order they are listed
EXPERIMENTS = {
    "scaling-c1": run_scaling_c1,
    "scaling-c2": run_scaling_c2,
    "stationarity": run_stationarity,
    "slivnyak": run_slivnyak,
    "extinction": run_extinction,
    "lattice-survival": run_lattice_survival,
    "engine-equivalence": run_engine_equivalence,
    "martingale": run_martingale,
    "moment": run_moment,
}

#: runs that take much longer than the rest and need an explicit opt-in
EXPENSIVE = {"scaling-c2"}


def get_experiment(name: str):
    try:
        return EXPERIMENTS[name]
    except KeyError:
        raise UnknownExperiment(name, EXPERIMENTS) from None


def run_experiment(name: str, cfg: Config | None = None, seed: int = 0, threads: int | None = None,
                   expensive: bool = False) -> ExperimentResult:
    runner = get_experiment(name)
    if name in EXPENSIVE and not expensive:
        raise BadConfig(f"experiment {name!r} runs for a long time; pass --expensive to run it", field="expensive")
    return runner(cfg or Config({}), seed, threads)
