import numpy as np
import pytest
from scipy import integrate as sint

from bpdl.config import Config
from bpdl.domain import SpatialDomain
from bpdl.errors import BadConfig, UnknownExperiment
from bpdl.experiments import EXPERIMENTS, get_experiment, run_experiment
from bpdl.experiments.extinction import (BirthDeathChain, cube_count, linear_extinction_cdf, linear_extinction_mean,
                                         linear_extinction_quantile, mass_bound)
from bpdl.experiments.figures import figure1, figure2, figure3, figure_run
from bpdl.experiments.lattice import contact_survival, lattice_params, lattice_survival, survival_condition
from bpdl.experiments.scaling import ScalingPlan, scaling_meanfield, scaling_superprocess
from bpdl.experiments.stationarity import (PalmFunction, dbc_params, default_battery, delta_generator_closed_form,
                                           eval_generator, slivnyak_check, stationarity_test)
from bpdl.experiments.suites import engine_equivalence, equivalence_presets, martingale_suite
from bpdl.kernels import Kernel
from bpdl.model import Population, make_params
from bpdl.simulator import FleetSpec, run_replicates
from bpdl.testfunctions import OuterMap, TestFunction


# ---------------------------------------------------------------- generator

@pytest.fixture
def dbc():
    return dbc_params(2.0, 0.5, 0.25, 0.75)


def test_dbc_params(dbc):
    assert dbc.mu_bar == 0.0 and dbc.U == dbc.D and dbc.U(np.zeros((1, 1)))[0] == 0.0
    assert dbc.gamma_bar / dbc.alpha_bar == pytest.approx(4.0)


def test_generator_constant_and_empty(dbc):
    pop = Population(np.array([-0.5, 0.1, 0.4]))
    assert eval_generator(OuterMap("constant", 3.0), TestFunction.indicator(-1.0, 1.0), pop, dbc) == 0.0
    assert eval_generator(OuterMap("min"), TestFunction.indicator(-1.0, 1.0), Population(np.empty((0, 1))), dbc) == 0.0


@pytest.mark.parametrize("x", [-1.3, -0.2, 0.0, 0.9])
@pytest.mark.parametrize("f", [TestFunction.indicator(-1.0, 1.0), TestFunction.triangle(0.0, 1.0)])
def test_generator_single_point_closed_form(dbc, f, x):
    got = eval_generator(OuterMap("identity"), f, Population(np.array([x])), dbc)
    # gamma int D(z) f(x+z) dz - f(x) (mu + alpha U(0)) with independent scipy quadrature
    D = dbc.D
    bp = [b - x for b in f.breakpoints_1d()] + [-0.75, -0.25, 0.25, 0.75]
    birth = sint.quad(lambda z: float(D(np.array([[z]]))[0] * f(np.array([[x + z]]))[0]), -0.75, 0.75,
                      points=sorted(p for p in bp if -0.75 < p < 0.75), limit=200)[0]
    oracle = 2.0 * birth - float(f(np.array([[x]]))[0]) * (0.0 + 0.5 * 0.0)
    assert got == pytest.approx(oracle, abs=1e-8)
    assert got == pytest.approx(delta_generator_closed_form(f, x, dbc), abs=1e-8)


@pytest.mark.parametrize("D", [Kernel.annulus(0.5, 2.0), Kernel.tophat(3.0)])
def test_single_point_closed_form_with_self_competition(D):
    # U(0) = 1 and mu > 0 make the loss term nonzero
    p = make_params(5.0, 1.0, 1.0, Kernel.indicator(0.5), D, domain=SpatialDomain.torus(40.0))
    f = TestFunction.indicator(-1.0, 1.0)
    for x in (-0.4, 0.0, 2.5):
        R = D.support_radius
        bp = sorted(b for b in {-1.0 - x, 1.0 - x, *D.breakpoints_1d()} if -R < b < R)
        birth = sint.quad(lambda z: float(D(np.array([[z]]))[0]) * float(f(np.array([[x + z]]))[0]), -R, R,
                          points=bp, limit=200)[0]
        oracle = 5.0 * birth - float(f(np.array([[x]]))[0]) * (1.0 + 1.0)
        got = eval_generator(OuterMap("identity"), f, Population(np.array([x])), p)
        assert got == pytest.approx(oracle, abs=1e-8)
        assert delta_generator_closed_form(f, x, p) == pytest.approx(oracle, abs=1e-8)


def test_generator_death_term_nonlinear(dbc):
    # two points at distance 0.5: each sees U = 1 from the other
    pop = Population(np.array([0.0, 0.5]))
    f = TestFunction.indicator(-0.1, 0.1)
    F = OuterMap("identity")
    got = eval_generator(F, f, pop, dbc)
    birth = sum(2.0 * sint.quad(lambda z: float(dbc.D(np.array([[z]]))[0]) * float(f(np.array([[x + z]]))[0]),
                                -0.75, 0.75, points=[-0.1 - x, 0.1 - x], limit=200)[0] for x in (0.0, 0.5))
    death = 0.5 * 1.0 * 1.0  # only x = 0 carries f = 1; its competition sum is U(0.5) = 1
    assert got == pytest.approx(birth - death, abs=1e-8)


def test_default_battery_size():
    assert len(default_battery()) == 6


def test_stationarity_small_and_controls(dbc):
    res = stationarity_test(dbc, 4.0, 1000, seed=1)
    assert all(r.contains_zero for r in res)
    broken = dbc_params(2.0, 0.5, 0.25, 0.75, mu=0.5)
    res = stationarity_test(broken, 4.0, 1000, seed=1)
    assert all(not r.contains_zero and r.mean < 0 for r in res)
    res = stationarity_test(dbc, 8.0, 1000, seed=1)
    assert all(r.mean < 0 for r in res)


@pytest.mark.parametrize("kind,exact", [("zero", 0.0), ("indicator", 8.0), ("count", 72.0)])
def test_slivnyak(kind, exact):
    r = slivnyak_check((-5.0, 5.0), 4.0, PalmFunction(kind, -1.0, 1.0), 4000, seed=2)
    assert r.agree and r.exact_ok
    assert r.exact == pytest.approx(exact)


# ---------------------------------------------------------------- extinction oracles

def test_cube_count_and_mass_bound():
    assert cube_count(4.0, 0.5, 1) == 8
    assert mass_bound(4.0, 8, 1.0, 1.0) == pytest.approx(32.0)
    assert cube_count(4.0, 0.5, 2) == int(np.ceil(4 / (0.5 / np.sqrt(2)))) ** 2


def test_linear_extinction_oracles():
    assert linear_extinction_mean(1.0, 2.0, 1) == pytest.approx(np.log(2.0), rel=1e-8)
    chain = BirthDeathChain(lambda n: 1.0 * n, lambda n: 2.0 * n, 400)
    assert linear_extinction_mean(1.0, 2.0, 10) == pytest.approx(chain.mean_extinction_time(10), rel=1e-6)
    q = linear_extinction_quantile(1.0, 2.0, 10, 0.99)
    assert linear_extinction_cdf(1.0, 2.0, q) ** 10 == pytest.approx(0.99, rel=1e-9)
    # pure death from 3 at unit rate
    assert BirthDeathChain(lambda n: 0.0 * n, lambda n: 1.0 * n, 10).mean_extinction_time(3) == pytest.approx(11 / 6)


def test_remark_style_subcritical_fleet():
    from bpdl.experiments.extinction import subcritical_extinction
    p = make_params(1.0, 2.0, 1.0, Kernel.indicator(0.5), Kernel.tophat(3.0), domain=SpatialDomain.torus(20.0))
    s = subcritical_extinction(p, Population(np.zeros((10, 1))), 200, seed=3)
    assert s.fraction == 1.0
    assert s.mean_time <= s.oracle_mean + 3 * s.stderr_time


# ---------------------------------------------------------------- lattice

def test_survival_condition():
    assert survival_condition(13.0, 1.0, 2.0, 1)
    assert not survival_condition(4.0, 1.0, 2.0, 1)


def test_lattice_pure_death():
    rep = lattice_survival(0.0, 1.0, 2.0, 10 / 3, 200, side=16, seed=1)
    assert rep.bpdl_survival <= 0.01
    assert not rep.condition


def test_lattice_positions_on_sites():
    p = lattice_params(13.0, 1.0, 2.0, 16)
    tr = run_replicates(FleetSpec(p, np.zeros((1, 1)), 2.0, 0, keep_positions=True, snapshot_times=(2.0,)), 3)
    for t in tr:
        x = t.positions[-1]
        assert np.array_equal(x, np.round(x))


def test_contact_process_dies_without_births():
    alive, _ = contact_survival(16, 1, 0.0, 1.0, 10.0, 100)[:2]
    assert np.mean(alive) == 0.0


def test_contact_survives_supercritical():
    alive = contact_survival(64, 1, 6.0, 1.0, 20.0, 100, seed=4)[0]
    assert np.mean(alive) > 0.3


# ---------------------------------------------------------------- scaling

def test_scaling_plan_params():
    plan = ScalingPlan((50, 100), "C2", 1.0, 0.0, 2.0, Kernel.indicator(0.5), 10.0, 1.0, 10, beta=2.0, sigma=1.0)
    p = plan.params_for(50)
    assert p.gamma_bar == 52.0 and p.mu_bar == 50.0 and p.alpha_bar == pytest.approx(0.04)
    assert p.D.params == (1.0 / 50,)
    c1 = ScalingPlan((50,), "C1", 2.0, 1.0, 1.0, Kernel.indicator(0.5), 4.0, 1.0, 10, D=Kernel.tophat(1.0))
    assert c1.params_for(50).alpha_bar == pytest.approx(0.02)
    with pytest.raises(ValueError):
        ScalingPlan((100, 50), "C1", 2.0, 1.0, 1.0, Kernel.indicator(0.5), 4.0, 1.0, 10, D=Kernel.tophat(1.0))


def test_scaling_critical_noise_decreases():
    plan = ScalingPlan((25, 400), "C1", 1.0, 1.0, 0.0, Kernel.indicator(0.5), 4.0, 1.0, 200, D=Kernel.tophat(1.0))
    tab = scaling_meanfield(plan, seed=1)
    assert tab.rms[0, 1] < tab.rms[0, 0]
    assert 0.1 < tab.rms[0, 1] / tab.rms[0, 0] < 0.5


def test_superprocess_finite_bracket_small():
    plan = ScalingPlan((10, 20), "C2", 1.0, 0.0, 2.0, Kernel.indicator(0.5), 10.0, 0.5, 400, beta=0.0,
                       observables=[TestFunction.constant(1.0)])
    rep = scaling_superprocess(plan, seed=2)
    assert np.all((rep.finite_ratio > 0.8) & (rep.finite_ratio < 1.2))
    # beta = 0 and f = 1: the drift is pure competition, so the mean mass does not grow
    assert np.all(rep.mean_mass < 1.0)
    assert np.all(np.abs(rep.mean_m) <= 3 * rep.se_m)


# ---------------------------------------------------------------- figures and suites

def test_figure_run_small():
    run = figure_run(n0=1, replicates=4, T=3.0, dt=0.5, seed=1, L=20.0)
    assert len(run.traces) == 4 and run.examined >= 4
    assert run.window_counts().shape == (4, len(run.times))
    assert figure1(run, t_early=1.0, t_late=3.0).late.shape == (20,)
    assert np.isfinite(figure2(run, 1.0, 3.0).mean) and np.isfinite(figure3(run, 5.0, 1.0, 3.0).mean)


def test_figure_run_deterministic():
    a = figure_run(n0=1, replicates=3, T=2.0, dt=0.5, seed=7, L=20.0)
    b = figure_run(n0=1, replicates=3, T=2.0, dt=0.5, seed=7, L=20.0)
    assert [t.replicate for t in a.traces] == [t.replicate for t in b.traces]
    assert np.array_equal(a.window_counts(), b.window_counts())


def test_engine_equivalence_small():
    params, init = equivalence_presets()["box-lost-seeds"]
    r = engine_equivalence(params, init, T=3.0, replicates=150, seed=4)
    assert r.passed


def test_martingale_suite_small(ref10):
    s = martingale_suite(ref10, t=1.0, replicates=1500, seed=5)
    assert all(r.mean_ok for r in s.reports)
    assert all(0.75 <= r.ratio <= 1.25 for r in s.reports)


# ---------------------------------------------------------------- registry

def test_registry_names():
    assert {"scaling-c1", "scaling-c2", "stationarity", "slivnyak", "extinction", "lattice-survival"} <= set(EXPERIMENTS)
    with pytest.raises(UnknownExperiment) as e:
        get_experiment("nope")
    assert "stationarity" in str(e.value)


def test_expensive_gate():
    with pytest.raises(BadConfig):
        run_experiment("scaling-c2", Config.from_text("replicates: 10\n"), 0, 1, expensive=False)


def test_registry_slivnyak_small():
    res = run_experiment("slivnyak", Config.from_text("replicates: 500\n"), 0, 1, expensive=False)
    assert res.passed and res.summary


def test_registry_lattice_no_claim_below_threshold():
    res = run_experiment("lattice-survival", Config.from_text("gamma: 4\nmu: 1\nalpha: 2\nreplicates: 10\nT: 5\n"),
                         0, 1, expensive=False)
    assert res.summary["survival_condition"] is False and res.passed


def test_registry_bad_config_field():
    with pytest.raises(BadConfig) as e:
        run_experiment("slivnyak", Config.from_text("replicates: -3\n"), 0, 1, expensive=False)
    assert e.value.field == "replicates"
