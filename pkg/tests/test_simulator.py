import numpy as np
import pytest
from scipy import stats

from bpdl.domain import SpatialDomain
from bpdl.errors import BudgetExceeded, EmptyPopulation
from bpdl.experiments.figures import reference_params
from bpdl.kernels import Kernel
from bpdl.model import Population, competition_sum, make_params
from bpdl.simulator import (FleetSpec, SimState, event_rates, indexed_engine_step, multiplicity_check,
                            read_traces_csv, run_replicates, step, write_positions_csv, write_traces_csv)


def _state(params, xs, seed=0, **kw):
    return SimState(params, Population(np.asarray(xs, dtype=float).reshape(-1, params.d)), seed=seed, **kw)


# ---------------------------------------------------------------- envelope rates

def test_event_rates_single(ref):
    assert event_rates(_state(ref, [0.0])) == (5.0, 1.0, 1.0)


def test_event_rates_three(ref):
    assert event_rates(_state(ref, [0.0, 1.0, 2.0])) == (15.0, 3.0, 9.0)


def test_empty_population_is_absorbing(ref):
    st = _state(ref, np.empty((0, 1)))
    assert event_rates(st) == (0.0, 0.0, 0.0)
    with pytest.raises(EmptyPopulation):
        step(st)
    tr = st.run(t_end=5.0)
    assert tr.count[-1] == 0 and tr.n_events == 0


# ---------------------------------------------------------------- thinning

def _saturated_params():
    # U covers the whole torus so U == Ubar for every pair, D == D_env
    return make_params(5.0, 1.0, 1.0, Kernel.indicator(3.0), Kernel.tophat(1.0), domain=SpatialDomain.torus(4.0))


def test_no_fictitious_events_when_saturated():
    st = _state(_saturated_params(), [0.0, 1.0])
    tr = st.run(max_events=10_000)
    assert tr.n_events == 10_000 or tr.count[-1] == 0
    assert tr.fictitious[-1] == 0


def test_event_class_frequencies_saturated():
    p = _saturated_params()
    st = _state(p, [0.0, 1.0], seed=3)
    expected = np.zeros(3)
    var = np.zeros(3)
    observed = np.zeros(3)
    names = ("birth", "natural_death", "competition_death")
    for _ in range(10_000):
        n = st.count
        if n == 0:
            break
        r = np.array([5.0 * n, 1.0 * n, 1.0 * n * n])
        pr = r / r.sum()
        ev = step(st)
        observed[names.index(ev.kind)] += 1
        expected += pr
        var += pr * (1 - pr)
    assert np.all(np.abs(observed - expected) <= 3 * np.sqrt(var))


def test_branch_probabilities_single_individual(ref):
    # birth w.p. 5/7, natural death 1/7, competition (self) death 1/7
    kinds = {"birth": 0, "natural_death": 0, "competition_death": 0}
    n = 6000
    for k in range(n):
        st = _state(ref, [0.0], seed=k)
        while True:
            ev = step(st)
            if ev.kind != "fictitious":
                break
        kinds[ev.kind] += 1
    for kind, p in (("birth", 5 / 7), ("natural_death", 1 / 7), ("competition_death", 1 / 7)):
        assert abs(kinds[kind] / n - p) <= 3 * np.sqrt(p * (1 - p) / n)


def test_single_individual_indexed_rates_match(ref):
    st = _state(ref, [0.3], engine="indexed")
    assert st.exact_rates() == (5.0, 1.0, 1.0)
    m1, m2, m3 = event_rates(st)
    assert (m1, m2, m3) == (5.0, 1.0, 1.0)


# ---------------------------------------------------------------- pure death

def test_pure_death_extinction_time(pure_death):
    spec = FleetSpec(pure_death, np.zeros((3, 1)) + np.array([[0.0], [3.0], [6.0]]), None, 7, until_extinct=True)
    ts = np.array([tr.extinction_time for tr in run_replicates(spec, 10_000)])
    assert abs(ts.mean() - 11 / 6) <= 3 * ts.std(ddof=1) / np.sqrt(len(ts))


def test_pure_death_monotone(pure_death):
    tr = _state(pure_death, [0.0, 2.0, 4.0, 6.0]).run(t_end=10.0, snapshot_times=np.linspace(0, 10, 101))
    assert np.all(np.diff(tr.count) <= 0)
    assert tr.births[-1] == 0


def test_subcritical_all_extinct():
    p = make_params(1.0, 2.0, 1.0, Kernel.indicator(0.5), Kernel.tophat(3.0), domain=SpatialDomain.torus(20.0))
    traces = run_replicates(FleetSpec(p, np.zeros((1, 1)), 100.0, 1), 200)
    assert all(tr.extinct for tr in traces)


# ---------------------------------------------------------------- determinism and bookkeeping

@pytest.mark.parametrize("engine", ["faithful", "indexed"])
def test_determinism(ref, engine):
    def go():
        return _state(ref, [0.0], seed=42, engine=engine).run(t_end=5.0, snapshot_times=np.arange(0, 5, 0.5),
                                                               keep_positions=True)
    a, b = go(), go()
    assert np.array_equal(a.count, b.count) and np.array_equal(a.fictitious, b.fictitious)
    assert all(np.array_equal(x, y) for x, y in zip(a.positions, b.positions))


def test_thread_count_independence(ref):
    spec = FleetSpec(ref, np.zeros((1, 1)), 3.0, 9, snapshot_times=(1.0, 2.0))
    a = run_replicates(spec, 12, threads=1)
    b = run_replicates(spec, 12, threads=3)
    assert all(np.array_equal(x.count, y.count) and x.n_events == y.n_events for x, y in zip(a, b))


@pytest.mark.parametrize("engine", ["faithful", "indexed"])
def test_counter_consistency(ref, engine):
    tr = _state(ref, [0.0, 1.0], seed=1, engine=engine).run(t_end=8.0, snapshot_times=np.arange(0, 8, 0.25))
    assert np.array_equal(tr.count, 2 + tr.births - tr.ndeaths - tr.cdeaths)
    assert np.all(np.diff(tr.t) > 0)


def test_budget_exceeded(ref):
    with pytest.raises(BudgetExceeded):
        _state(ref, np.linspace(-3, 3, 20)).run(t_end=50.0, event_cap=100)


def test_max_events_horizon(ref):
    tr = _state(ref, np.linspace(-3, 3, 20)).run(max_events=50)
    assert tr.n_events == 50


# ---------------------------------------------------------------- indexed engine

def test_indexed_rates_match_brute_force():
    p = make_params(2.0, 1.0, 0.7, Kernel.indicator(0.5), Kernel.tophat(1.0), domain=SpatialDomain.torus(20.0))
    st = _state(p, np.random.default_rng(0).uniform(-10, 10, 1000), engine="indexed")
    st.rebuild_index()
    st.check_index()
    pop = st.population
    brute = sum(competition_sum(pop, x, p) for x in pop.positions) * 0.7
    assert st.exact_rates()[2] == pytest.approx(brute, rel=1e-9)
    for _ in range(500):
        indexed_engine_step(st, debug=False)
    st.check_index()


def test_indexed_debug_steps(ref10):
    st = _state(ref10, np.linspace(-4, 4, 30), seed=5, engine="indexed")
    for _ in range(300):
        if st.count == 0:
            break
        indexed_engine_step(st, debug=True)


def test_engines_agree_small(ref10):
    out = {}
    for k, eng in enumerate(("faithful", "indexed")):
        spec = FleetSpec(ref10, np.zeros((1, 1)), 5.0, 100 + k, engine=eng)
        out[eng] = [tr.count[-1] for tr in run_replicates(spec, 300)]
    assert stats.ks_2samp(out["faithful"], out["indexed"]).pvalue > 0.01


# ---------------------------------------------------------------- multiplicity

def test_multiplicity(ref):
    assert multiplicity_check(Population(np.zeros((2, 1)))) == 2
    tr = _state(ref, [0.0, 1.0], seed=2).run(t_end=5.0, snapshot_times=np.arange(0, 5, 0.5), keep_positions=True)
    assert all(multiplicity_check(p) == 1 for p in tr.positions if len(p))


def test_multiplicity_disabled_on_lattice():
    from bpdl.experiments.lattice import lattice_params
    p = lattice_params(13.0, 1.0, 2.0, 16)
    assert multiplicity_check(Population(np.zeros((2, 1))), p) is None


# ---------------------------------------------------------------- moment-bound diagnostic

def test_sup_count_stable_across_batches(ref10):
    spec = FleetSpec(ref10, np.zeros((1, 1)), 5.0, 3, snapshot_times=tuple(np.arange(0, 5.01, 0.1)))
    sups = np.array([tr.count.max() for tr in run_replicates(spec, 400)])
    a, b = sups[:200], sups[200:]
    se = np.sqrt(a.var(ddof=1) / 200 + b.var(ddof=1) / 200)
    assert abs(a.mean() - b.mean()) <= 3 * se
    assert np.isfinite(sups).all()


# ---------------------------------------------------------------- CSV round trip

def test_traces_csv_round_trip(ref, tmp_path):
    spec = FleetSpec(ref, np.zeros((1, 1)), 2.0, 0, snapshot_times=(0.5, 1.0, 1.5), keep_positions=True)
    traces = run_replicates(spec, 3)
    write_traces_csv(traces, tmp_path / "t.csv")
    write_positions_csv(traces, tmp_path / "p.csv")
    header = (tmp_path / "t.csv").read_text().splitlines()[0]
    assert header.split(",") == ["replicate_id", "t", "count", "births_cum", "ndeaths_cum", "cdeaths_cum",
                                 "fictitious_cum"]
    back = read_traces_csv(tmp_path / "t.csv", tmp_path / "p.csv")
    for a, b in zip(traces, back):
        assert np.array_equal(a.count, b.count) and np.array_equal(a.t, b.t)
        assert all(np.array_equal(x, y) for x, y in zip(a.positions, b.positions))
