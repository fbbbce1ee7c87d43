import numpy as np
import pytest

import oracles
from catalog import PRODUCT, RANDERS_KLEIN_CONST, metric, random_polynomial_riemannian, samples
from finsler.curvature import (
    flag_curvature,
    identity_residuals,
    matsumoto_profile,
    mkdiff_residual,
    riemann_curvature,
    scalar_flag,
    scalar_residual,
    vertical_curvature_derivative,
)
from finsler.errors import AccuracyError, DegenerateFlagError, NotScalarCurvatureError
from finsler.metrics import build_metric

rng = np.random.default_rng(5)


def _rel(a, b):
    return np.abs(a - b).max() / max(np.abs(b).max(), 1e-300)


@pytest.mark.parametrize("seed", [1, 2])
def test_curvature_matches_levi_civita(seed):
    spec = random_polynomial_riemannian(seed)
    m = build_metric(spec)
    lc = oracles.riemannian_levi_civita(spec)
    for x, y in samples(m, rng, 5):
        assert _rel(riemann_curvature(m, x, y).K, lc.curvature_operator(x, y)) < 1e-10


def test_klein_curvature_operator_closed_form():
    # constant curvature -1: K^i_k = -(F^2 delta^i_k - y^i y_k)
    m = metric("klein")
    for x, y in samples(m, rng, 5):
        cv = riemann_curvature(m, x, y)
        ref = -(cv.F**2 * np.eye(3) - np.outer(y, cv.g @ y))
        assert _rel(cv.K, ref) < 1e-12


@pytest.mark.parametrize("name, value", [
    ("klein", -1.0), ("hilbert_ball", -1.0), ("funk_ball", -0.25), ("funk_convex", -0.25),
    ("euclidean", 0.0), ("minkowski_quartic_perturbed", 0.0),
])
def test_constant_flag_curvature(name, value):
    m = metric(name)
    for x, y in samples(m, rng, 5):
        u = rng.standard_normal(3)
        assert flag_curvature(m, x, y, u) == pytest.approx(value, abs=1e-10)
        assert scalar_flag(m, x, y) == pytest.approx(value, abs=1e-10)


def test_scaling_F_scales_curvature():
    m = build_metric({"family": "funk_ball", "n": 3, "params": {"scale": 0.5}})
    assert scalar_flag(m, [0.1, 0.2, 0.0], [1.0, 0.0, 0.5]) == pytest.approx(-1.0, abs=1e-10)


def test_flag_with_parallel_u_is_rejected():
    m = metric("klein")
    with pytest.raises(DegenerateFlagError):
        flag_curvature(m, [0.1, 0, 0], [1.0, 2.0, 0], [2.0, 4.0, 0])


def test_randers_klein_curvature_structure():
    m = build_metric(RANDERS_KLEIN_CONST)
    for x, y in samples(m, rng, 5):
        cv = riemann_curvature(m, x, y)
        assert cv.annihilation_residual() < 1e-10
        assert cv.self_adjoint_residual() < 1e-10
        assert scalar_residual(m, x, y) <= 1e-9 * cv.norm


def test_product_metric_is_not_of_scalar_curvature():
    m = build_metric(PRODUCT)
    x, y = np.array([0.3, 0.1, -0.2]), np.array([0.2, 1.0, 0.7])
    cv = riemann_curvature(m, x, y)
    assert scalar_residual(m, x, y) > 1e-2 * cv.norm
    with pytest.raises(NotScalarCurvatureError):
        mkdiff_residual(m, x, y)
    with pytest.raises(NotScalarCurvatureError):
        matsumoto_profile(m, x, y, [0, 0, 1.0], 1.0, 100)


def test_vertical_derivative_of_curvature_against_differences():
    m = metric("funk_convex")
    x, y = m.sample_point(rng), m.sample_direction(rng)
    Kd = vertical_curvature_derivative(m, x, y)
    h = 1e-4
    for l in range(3):
        e = np.eye(3)[l]
        fd = (riemann_curvature(m, x, y + h * e).K - riemann_curvature(m, x, y - h * e).K) / (2 * h)
        assert np.abs(Kd[:, :, l] - fd).max() < 1e-6 * max(1, np.abs(Kd).max())


@pytest.mark.parametrize("name", ["funk_ball", "funk_convex", "klein", "randers"])
def test_identity_chain(name):
    m = metric(name)
    for x, y in samples(m, rng, 3):
        res = identity_residuals(m, x, y)
        assert set(res) == {"Moeq1", "Moeq2", "MKdiff", "AZeq1", "AZeq2"}
        for r in res.values():
            assert r.skipped is None
            assert r.relative < 1e-8, (r.name, r.relative)


def test_identity_chain_skips_without_scalar_curvature():
    m = build_metric(PRODUCT)
    res = identity_residuals(m, np.array([0.3, 0.1, -0.2]), np.array([0.2, 1.0, 0.7]))
    for name in ("MKdiff", "AZeq1", "AZeq2"):
        assert res[name].skipped
    # the component form holds regardless of scalar curvature
    assert res["Moeq1"].relative < 1e-8
    assert res["Moeq2"].relative < 1e-8


def test_profile_vanishes_for_randers():
    m = metric("randers")
    rep = matsumoto_profile(m, [0.1, 0.2, 0.0], [1.0, 0.0, 0.3], [0.2, 1.0, -0.4], 1.0, 100)
    assert rep.vacuous and rep.ode_pass
    assert rep.max_M < 1e-14


def _funk_convex_profile(steps, seed=3, T=2.0, a=None, scale=1.0):
    m = build_metric({"family": "funk_convex", "n": 3, "params": {"scale": scale}})
    r = np.random.default_rng(seed)
    x, y, u = m.sample_point(r), m.sample_direction(r), r.standard_normal(3)
    return matsumoto_profile(m, x, y, u, T, steps, a=a)


def test_profile_against_ode_resolve():
    rep = _funk_convex_profile(200)
    assert rep.ode_pass
    assert np.allclose(rep.F, 1.0, atol=1e-9)
    ref = oracles.resolve_profile(rep.t, rep.K, rep.F, rep.M0, rep.dM0)
    assert np.abs(rep.M - ref).max() < 1e-7 * rep.max_M
    # constant K = -1/4 at unit speed: M = M0 cosh(t/2) + 2 M'(0) sinh(t/2)
    closed = rep.M0 * np.cosh(rep.t / 2) + 2 * rep.dM0 * np.sinh(rep.t / 2)
    assert np.abs(rep.M - closed).max() < 1e-7 * rep.max_M


def test_profile_residual_converges_at_fourth_order():
    # coarse grids, where difference truncation dominates round-off
    r1 = _funk_convex_profile(16).max_residual
    r2 = _funk_convex_profile(32).max_residual
    assert r2 <= r1 / 8


def test_profile_too_few_steps():
    with pytest.raises(AccuracyError) as info:
        _funk_convex_profile(8)
    assert info.value.suggested_steps >= 16


def test_comparison_margin_on_rescaled_funk():
    rep = _funk_convex_profile(200, a=1.0, scale=0.5)
    assert rep.bound_ok
    assert rep.mvc_pass
    assert rep.interval_end is not None and rep.interval_end > 0
    text = rep.to_csv()
    assert text.splitlines()[0] == "t,M,K,residual,margin"
