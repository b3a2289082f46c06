import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate as sint
from scipy import stats

from bpdl.config import (Config, build_domain, build_initial, build_kernel, build_params, build_test_function,
                         build_times, load_preset, preset_names)
from bpdl.errors import BadConfig, EnvelopeViolated, QuadratureFail
from bpdl.rng import Stream, seed_sequence
from bpdl.testfunctions import OuterMap, TestFunction, adaptive_quad, adaptive_quad_batch


# ---------------------------------------------------------------- rng

def test_streams_reproducible_and_distinct():
    a, b, c = Stream(7, 3), Stream(7, 3), Stream(7, 4)
    xa = [a.uniform() for _ in range(5)]
    assert xa == [b.uniform() for _ in range(5)]
    assert xa != [c.uniform() for _ in range(5)]


def test_stream_copy_continues_identically():
    a = Stream(1, 1)
    a.uniform()
    b = a.copy()
    assert [a.uniform() for _ in range(4)] == [b.uniform() for _ in range(4)]
    assert np.array_equal(a.np.random(3), b.np.random(3))


def test_uniform_open_interval_and_exponential():
    s = Stream(2)
    u = np.array([s.uniform() for _ in range(50_000)])
    assert np.all((u > 0) & (u < 1))
    assert stats.kstest(u, "uniform").pvalue > 0.01
    e = np.array([s.exponential(2.0) for _ in range(50_000)])
    assert stats.kstest(e, "expon", args=(0, 0.5)).pvalue > 0.01


def test_seed_sequence_spawn_key():
    assert seed_sequence(5, 2).spawn_key == (2,)
    assert seed_sequence(5, 2).entropy == 5


# ---------------------------------------------------------------- test functions

def test_test_function_values():
    x = np.array([[-2.0], [-1.0], [0.0], [0.5], [1.0], [2.0]])
    assert np.array_equal(TestFunction.indicator(-1.0, 1.0)(x), [0, 1, 1, 1, 1, 0])
    assert np.allclose(TestFunction.triangle(0.0, 1.0)(x), [0, 0, 1, 0.5, 0, 0])
    assert np.allclose(TestFunction.constant(2.0)(x), 2.0)
    assert TestFunction.constant(0.0).is_zero


@pytest.mark.parametrize("f", [TestFunction.indicator(-1.0, 2.0, 3.0), TestFunction.triangle(0.5, 1.5)])
def test_integral_1d(f):
    bp = f.breakpoints_1d()
    val = sint.quad(lambda z: float(f(np.array([[z]]))[0]), bp[0] - 1, bp[-1] + 1, points=bp)[0]
    assert f.integral_1d() == pytest.approx(val)


def test_outer_maps():
    assert OuterMap("min", 10.0)(12.0) == 10.0
    assert OuterMap("ratio")(1.0) == 0.5
    assert OuterMap("arctan", 10.0)(10.0) == pytest.approx(np.pi / 4)
    with pytest.raises(ValueError):
        OuterMap("bogus")(1.0)


def test_adaptive_quad_smooth_and_kinked():
    assert adaptive_quad(np.sin, 0.0, np.pi) == pytest.approx(2.0, abs=1e-10)
    assert adaptive_quad(np.abs, -1.0, 2.0, breakpoints=(0.0,)) == pytest.approx(2.5, abs=1e-12)


def test_adaptive_quad_batch_matches_scalar():
    lo = np.array([0.0, -1.0, 1.0])
    hi = np.array([np.pi, 2.0, 3.0])
    owner_scale = np.array([1.0, 2.0, 3.0])

    def g(z, k):
        return owner_scale[k] * np.sin(z) ** 2

    got = adaptive_quad_batch(g, lo, hi, np.ones(3))
    for a, b, s, v in zip(lo, hi, owner_scale, got):
        assert v == pytest.approx(sint.quad(lambda z: s * np.sin(z) ** 2, a, b)[0], abs=1e-9)


def test_adaptive_quad_fails_on_singularity():
    with pytest.raises(QuadratureFail):
        adaptive_quad(lambda z: 1.0 / np.abs(z - 0.3) ** 0.99, 0.0, 1.0, tol=1e-14, max_depth=6)


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(0.1, 3))
def test_adaptive_quad_polynomial(a, w):
    b = a + w
    assert adaptive_quad(lambda z: z**5 - z, a, b) == pytest.approx((b**6 - a**6) / 6 - (b**2 - a**2) / 2,
                                                                    abs=1e-8 * max(1, abs(b) ** 6))


# ---------------------------------------------------------------- config

MODEL = """\
model:
  gamma: 5
  mu: 1
  alpha: 1
  U: {shape: indicator, radius: 0.5, height: 1}
  D: {shape: tophat, radius: 3}
  domain: {kind: torus, side: 40}
"""


def test_build_params_from_text():
    p = build_params(Config.from_text(MODEL))
    assert p.c0 == pytest.approx(4.0) and p.domain.side == (40.0,)
    assert p.U.sup == 1.0 and p.D.support_radius == 3.0


def test_missing_kernel_field_named():
    cfg = Config.from_text(MODEL.replace("  D: {shape: tophat, radius: 3}\n", ""))
    with pytest.raises(BadConfig) as e:
        build_params(cfg)
    assert e.value.field == "model.D" and e.value.line == 1
    assert "model.D" in str(e.value)


def test_bad_value_reports_line():
    cfg = Config.from_text(MODEL.replace("radius: 3", "radius: -3"))
    with pytest.raises(BadConfig) as e:
        build_params(cfg)
    assert e.value.line == 6 and "radius" in e.value.field


def test_unknown_shape_and_type_errors():
    with pytest.raises(BadConfig):
        build_params(Config.from_text(MODEL.replace("shape: tophat", "shape: hexagon")))
    with pytest.raises(BadConfig):
        build_params(Config.from_text(MODEL.replace("gamma: 5", "gamma: lots")))


def test_yaml_syntax_error_is_bad_config():
    with pytest.raises(BadConfig):
        Config.from_text("model: [unclosed\n")


def test_model_errors_become_bad_config():
    with pytest.raises(BadConfig) as e:
        build_params(Config.from_text(MODEL.replace("gamma: 5", "gamma: -5")))
    assert e.value.line == 2
    text = MODEL.replace("gamma: 5", "gamma: {cosine: {base: 0, amplitude: 1, period: 4}, lo: [-20], hi: [20]}")
    with pytest.raises(BadConfig) as e:
        build_params(Config.from_text(text))
    assert "gamma" in str(e.value)
    text = MODEL.replace("  D: {shape: tophat, radius: 3}\n",
                         "  D: {shape: tophat, radius: 3}\n  C: 0.5\n")
    with pytest.raises(BadConfig) as e:
        build_params(Config.from_text(text))
    assert isinstance(e.value.__context__, EnvelopeViolated)


def test_build_kernels_and_domains():
    cfg = Config.from_text("a: {shape: annulus, a: 0.25, b: 0.75}\nb: {shape: gaussian, variance: 2}\n"
                           "c: {kind: box, bounds: [[-1, 1]]}\nd: {kind: lattice, side: 8}\n")
    assert build_kernel(cfg, "a", 1).params == (0.25, 0.75)
    assert build_kernel(cfg, "b", 1).params == (2.0,)
    assert build_domain(cfg, "c").mode == "box"
    assert build_domain(cfg, "d").mode == "lattice"


def test_build_initial_kinds():
    s = Stream(0)
    cfg = Config.from_text("a: {kind: atoms, at: [0], count: 60}\nb: {kind: points, positions: [[0], [1]]}\n"
                           "c: {kind: poisson, lo: [-1], hi: [1], intensity: 50}\n"
                           "e: {kind: uniform, lo: [-1], hi: [1], count: 7}\n")
    assert len(build_initial(cfg, 1, "a")) == 60
    assert len(build_initial(cfg, 1, "b")) == 2
    assert len(build_initial(cfg, 1, "c")(s)) > 0
    assert len(build_initial(cfg, 1, "e")(s)) == 7


def test_build_times_and_test_functions():
    cfg = Config.from_text("s: {every: 0.5, until: 2}\nl: [2, 1]\nf: {kind: triangle, center: [0], halfwidth: 2}\n")
    assert build_times(cfg, "s") == (0.0, 0.5, 1.0, 1.5, 2.0)
    assert build_times(cfg, "l") == (1.0, 2.0)
    f = build_test_function(cfg, "f")
    assert f(np.array([[1.0]]))[0] == pytest.approx(0.5)


@pytest.mark.parametrize("name", preset_names())
def test_presets_parse(name):
    cfg = load_preset(name)
    assert cfg.data
    if cfg.has("model"):
        build_params(cfg, "model")


def test_preset_catalog():
    names = set(preset_names())
    assert {"fig1", "fig2", "fig2b", "fig3", "logistic-oracle", "dbc-decay", "fixed-point", "stationarity",
            "slivnyak", "extinction", "lattice-survival", "scaling-c1", "scaling-c2"} <= names
    with pytest.raises(BadConfig):
        load_preset("no-such-preset")
