import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bpdl import meanfield as mf
from bpdl.domain import SpatialDomain
from bpdl.errors import NoConvergence, PoleAtZero, StepTooLarge
from bpdl.experiments.figures import reference_params
from bpdl.kernels import Kernel
from bpdl.model import make_params


def _field(params, values=None, c=None, n=200, L=10.0):
    if c is not None:
        return mf.DensityField.constant(c, n, L, params)
    return mf.DensityField.from_function(values, n, L, params)


@pytest.fixture
def gauss():
    """D = U Gaussian, gamma = 3, mu = 1, alpha = 1 on a torus of side 20."""
    return make_params(3.0, 1.0, 1.0, Kernel.gaussian(1.0), Kernel.gaussian(1.0), domain=SpatialDomain.torus(20.0))


# ---------------------------------------------------------------- stencils and rhs

def test_stencil_mass_exact(ref10):
    f = _field(ref10, c=1.0)
    sD, sU = f.stencils
    assert np.allclose(sD.convolve(f.values), 1.0, atol=1e-14)
    assert np.allclose(sU.convolve(f.values), 1.0, atol=1e-14)


def test_rhs_equilibrium(ref10):
    assert np.abs(mf.rhs(_field(ref10, c=ref10.c0))).max() <= 1e-12
    assert np.all(mf.rhs(_field(ref10, c=0.0)) == 0.0)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 20.0))
def test_rhs_constant(c):
    p = reference_params(10.0)
    assert np.allclose(mf.rhs(_field(p, c=c)), 4.0 * c - c * c, atol=1e-11 * max(1.0, c * c))


def test_rhs_direct_and_fft_agree(gauss):
    f = _field(gauss, lambda x: 2.0 + np.sin(2 * np.pi * x[..., 0] / 20.0), L=20.0, n=256)
    a = mf.rhs(f, method="direct")
    b = mf.rhs(f, method="fft")
    assert np.abs(a - b).max() <= 1e-10


# ---------------------------------------------------------------- integration

def test_logistic_closed_form(ref10):
    f = _field(ref10, c=1.0)
    res = mf.integrate(f, 2.0, 0.005, out_times=[2.0])
    exact = mf.logistic_closed_form(1.0, 4.0, 4.0, 2.0)
    assert np.abs(res.field.values - exact).max() < 1e-6
    assert res.max_clip == 0.0


def test_rk4_order(ref10):
    f = _field(ref10, c=0.25)
    errs = []
    for k in range(3):
        r = mf.integrate(f, 2.0, 0.1 / 2**k, check_stability=False)
        errs.append(np.abs(r.field.values - mf.logistic_closed_form(0.25, 4.0, 4.0, 2.0)).max())
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios >= 12) & (ratios <= 20))


def test_subcritical_mass_decay():
    p = make_params(1.0, 2.0, 1.0, Kernel.indicator(0.5), Kernel.tophat(1.0), domain=SpatialDomain.torus(10.0))
    f = _field(p, lambda x: 0.5 + np.exp(-x[..., 0] ** 2))
    res = mf.integrate(f, 5.0, 0.01)
    bound = res.mass[0] * np.exp(-res.times)
    assert np.all(res.mass <= bound * (1 + 1e-12))


def test_step_too_large(ref10):
    f = _field(ref10, c=1.0)
    with pytest.raises(StepTooLarge):
        mf.integrate(f, 1.0, 10 * mf.stability_dt(f))


def test_stability_bound_formula(ref10):
    f = _field(ref10, c=2.0)
    assert mf.stability_dt(f) == pytest.approx(0.1 / (5 + 1 + 1 * 2.0 * 1.0))


# ---------------------------------------------------------------- picard

def test_picard_matches_rk4(ref10):
    f = _field(ref10, c=1.0)
    a = mf.picard_iterate(f, 0.5, 8)
    b = mf.integrate(f, 0.5, 0.001).field
    assert np.abs(a.values - b.values).max() <= 1e-5
    assert np.abs(a.values - mf.logistic_closed_form(1.0, 4.0, 4.0, 0.5)).max() <= 1e-5


@pytest.mark.parametrize("params", [
    reference_params(10.0),
    make_params(3.0, 1.0, 1.0, Kernel.gaussian(1.0), Kernel.gaussian(1.0), domain=SpatialDomain.torus(10.0)),
    make_params(2.0, 0.5, 0.5, Kernel.annulus(0.25, 0.75), Kernel.tophat(2.0), domain=SpatialDomain.torus(10.0)),
])
def test_picard_cross_validation(params):
    f = _field(params, lambda x: 1.0 + 0.5 * np.cos(2 * np.pi * x[..., 0] / 10.0))
    a = mf.picard_iterate(f, 0.5, 8)
    b = mf.integrate(f, 0.5, 0.001).field
    assert np.abs(a.values - b.values).max() <= 1e-5


def test_picard_fixed_point_and_growth_bound(ref10):
    c0 = ref10.c0
    a = mf.picard_iterate(_field(ref10, c=c0), 0.3, 4)
    assert np.abs(a.values - c0).max() <= 1e-12
    f = _field(ref10, lambda x: 1.0 + np.exp(-x[..., 0] ** 2))
    for n in (1, 2, 5):
        it = mf.picard_iterate(f, 0.3, n)
        assert it.values.max() <= f.values.max() * np.exp(5.0 * 0.3)


# ---------------------------------------------------------------- F map and fixed point

def test_apply_F(ref10):
    c0 = ref10.c0
    assert np.abs(mf.apply_F(_field(ref10, c=c0)).values - c0).max() <= 1e-12
    assert np.all(mf.apply_F(_field(ref10, c=0.0)).values == 0.0)
    v = mf.apply_F(_field(ref10, c=2 * c0)).values
    expected = 2 * 5.0 * c0 / (1.0 + 2 * c0)
    assert np.allclose(v, expected) and expected < 2 * c0


def test_apply_F_pole():
    p = make_params(2.0, 0.0, 0.5, Kernel.indicator(0.5), Kernel.tophat(1.0), domain=SpatialDomain.torus(10.0))
    with pytest.raises(PoleAtZero):
        mf.apply_F(_field(p, c=0.0))


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(0.0, 10.0), min_size=50, max_size=50))
def test_F_nonnegative(vals):
    p = reference_params(10.0)
    f = mf.DensityField(np.array(vals), 10.0, p)
    assert np.all(mf.apply_F(f).values >= 0)


def test_fixed_point_contraction(gauss):
    c0 = gauss.c0
    f = _field(gauss, lambda x: c0 * (1 + 0.3 * np.sin(2 * np.pi * x[..., 0] / 20.0)), L=20.0, n=256)
    res = mf.fixed_point(f, tol=1e-12, max_iters=2000)
    assert np.abs(res.field.values - c0).max() < 1e-8
    assert res.contraction_ok
    assert np.all(np.array(res.ratios) <= np.array(res.bounds) * (1 + 1e-9))


def test_fixed_point_trivial(gauss):
    res = mf.fixed_point(_field(gauss, c=0.0, L=20.0))
    assert np.all(res.field.values == 0.0)
    assert mf.fixed_point(_field(gauss, c=gauss.c0, L=20.0)).iterations == 0


def test_fixed_point_no_convergence(gauss):
    f = _field(gauss, lambda x: 1.0 + 0.5 * np.cos(2 * np.pi * x[..., 0] / 20.0), L=20.0)
    with pytest.raises(NoConvergence):
        mf.fixed_point(f, tol=1e-14, max_iters=2)


# ---------------------------------------------------------------- kernel domination

def test_assumption_C_reference_fails(ref):
    rep = mf.check_assumption_C(reference_params(40.0))
    assert not rep.pointwise_ok and not rep.passed


def test_assumption_C_equal_kernels(gauss):
    rep = mf.check_assumption_C(gauss)
    assert rep.passed and rep.D_equals_U
    assert rep.R_mass == pytest.approx(1.0, abs=1e-6)


def test_assumption_C_mixed_pass():
    # gamma D >= (gamma - mu) U with D wide and U narrow enough
    p = make_params(2.0, 1.0, 1.0, Kernel.tophat(0.5), Kernel.tophat(0.5), domain=SpatialDomain.torus(10.0))
    rep = mf.check_assumption_C(p)
    assert rep.passed and rep.R_mass == pytest.approx(1.0, abs=1e-6)


# ---------------------------------------------------------------- decay

def test_l2_decay(gauss):
    c0 = gauss.c0
    f = _field(gauss, lambda x: c0 + 0.5 * np.exp(-x[..., 0] ** 2), L=20.0, n=256)
    rep = mf.l2_decay_check(f, 10.0)
    assert rep.monotone and rep.r2 > 0.95 and rep.rate > 0


def test_l2_decay_at_equilibrium(gauss):
    rep = mf.l2_decay_check(_field(gauss, c=gauss.c0, L=20.0), 2.0)
    assert np.all(np.abs(rep.energy) <= 1e-24)


def test_dbc_bound():
    p = make_params(2.0, 0.0, 0.5, Kernel.tophat(1.0), Kernel.tophat(1.0), domain=SpatialDomain.torus(20.0))
    f = _field(p, lambda x: 4.0 + 3.0 * np.cos(2 * np.pi * 2 * x[..., 0] / 20.0), L=20.0, n=256)
    rep = mf.dbc_bound_check(f, 10.0)
    assert rep.bound_ok and rep.monotone_ok and rep.passed
