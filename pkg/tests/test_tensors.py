import numpy as np
import pytest

import oracles
from catalog import CATALOG, metric, samples
from finsler.errors import DegenerateMetricError
from finsler.harness.commands import homogeneity_residuals
from finsler.metrics import build_metric
from finsler.tensors import (
    PointJets,
    angular_metric,
    cartan_torsion,
    cubic_form_sup,
    fundamental_form,
    inverse_metric,
    matsumoto_norm,
    matsumoto_torsion,
    mean_berwald,
    mean_cartan,
    nonlinear_connection,
    spray,
)

rng = np.random.default_rng(7)
NONRIEMANNIAN = ["randers", "funk_ball", "funk_convex", "minkowski_quartic_perturbed"]


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_fundamental_form_matches_finite_differences(name):
    m = metric(name)
    for x, y in samples(m, rng, 5):
        g = fundamental_form(m, x, y).components
        assert np.allclose(g, g.T, atol=0)
        ref = oracles.fd_fundamental_form(m, x, y)
        assert np.abs(g - ref).max() <= 1e-7 * np.abs(ref).max()


@pytest.mark.parametrize("name", NONRIEMANNIAN)
def test_cartan_matches_finite_differences(name):
    m = metric(name)
    for x, y in samples(m, rng, 3):
        C = cartan_torsion(m, x, y).components
        ref = oracles.fd_cartan(m, x, y)
        scale = np.abs(fundamental_form(m, x, y).components).max() / m(x, y)
        assert np.abs(C - ref).max() <= 1e-5 * scale
        # totally symmetric
        assert np.allclose(C, C.transpose(1, 0, 2)) and np.allclose(C, C.transpose(2, 1, 0))


@pytest.mark.parametrize("name", ["euclidean", "riemannian", "klein", "hilbert_ball"])
def test_riemannian_families_have_no_torsion(name):
    m = metric(name)
    for x, y in samples(m, rng, 5):
        g = fundamental_form(m, x, y).components
        assert np.abs(cartan_torsion(m, x, y).components).max() <= 1e-12 * np.abs(g).max()
        assert np.abs(mean_cartan(m, x, y).components).max() <= 1e-12 * np.abs(g).max()


def test_matsumoto_matches_its_definition():
    m = metric("funk_convex")
    for x, y in samples(m, rng, 3):
        pj = PointJets(m, x, y, 3)
        ref = oracles.matsumoto_from(oracles.fd_fundamental_form(m, x, y), oracles.fd_cartan(m, x, y), y, m(x, y))
        M = matsumoto_torsion(m, x, y).components
        assert np.abs(M - ref).max() <= 1e-5 * np.abs(pj.value(pj.g)).max()
        # trace-free
        assert np.abs(np.einsum("ij,ijk->k", pj.value(pj.ginv), M)).max() < 1e-12 * max(1, np.abs(M).max())


@pytest.mark.parametrize("name", ["randers", "funk_ball"])
def test_randers_type_metrics_have_vanishing_matsumoto(name):
    m = metric(name)
    for x, y in samples(m, rng, 10):
        C = cartan_torsion(m, x, y).components
        assert np.abs(matsumoto_torsion(m, x, y).components).max() <= 1e-10 * (1 + np.abs(C).max())


def test_angular_metric_dual_formula():
    m = metric("funk_convex")
    for x, y in samples(m, rng, 5):
        h = angular_metric(m, x, y).components
        assert np.abs(h @ y).max() < 1e-12 * np.abs(h).max() * np.abs(y).max()


def test_inverse_metric():
    m = metric("randers")
    g = fundamental_form(m, [0.1, 0.2, 0.3], [1.0, 0.0, -1.0]).components
    assert np.allclose(inverse_metric(g) @ g, np.eye(3), atol=1e-14)


@pytest.mark.parametrize("name", ["klein", "hilbert_ball", "funk_ball", "funk_convex", "randers"])
def test_spray_of_projectively_flat_metrics(name):
    # projectively flat: G = P y with P = F_{x^k} y^k / (2F)
    m = metric(name)
    for x, y in samples(m, rng, 5):
        G = spray(m, x, y).components
        P = oracles.projective_factor(m, x, y)
        assert np.abs(G - P * y).max() <= 1e-9 * max(1.0, np.abs(G).max())


def test_funk_spray_is_half_F_y():
    for name in ("funk_ball", "funk_convex"):
        m = metric(name)
        for x, y in samples(m, rng, 5):
            assert np.allclose(spray(m, x, y).components, 0.5 * m(x, y) * y, rtol=1e-12, atol=1e-14)


def test_klein_spray_matches_levi_civita():
    m = metric("klein")
    lc = oracles.klein_levi_civita(3)
    for x, y in samples(m, rng, 5):
        assert np.allclose(spray(m, x, y).components, lc.spray(x, y), rtol=1e-12, atol=1e-14)
        N = nonlinear_connection(m, x, y).components
        assert np.allclose(N, np.einsum("ijk,k->ij", lc.christoffel(x), y), rtol=1e-12, atol=1e-14)


def test_mean_berwald_nonzero_for_funk_zero_for_randers_constant():
    f = metric("funk_ball")
    assert np.abs(mean_berwald(f, [0.2, 0, 0], [1.0, 0, 0]).components).max() > 1e-2
    # Minkowski norms have vanishing spray
    mq = metric("minkowski_quartic_perturbed")
    assert np.abs(mean_berwald(mq, [0.1, 0, 0], [1.0, 0.5, 0]).components).max() == 0.0


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_homogeneity_and_euler(name):
    m = metric(name)
    for x, y in samples(m, rng, 5):
        res = homogeneity_residuals(m, x, y)
        assert max(res.values()) <= 1e-10, res


def test_cubic_form_sup_against_dense_grid():
    m = metric("funk_convex")
    for x, y in samples(m, rng, 3):
        pj = PointJets(m, x, y, 3)
        g, M = pj.value(pj.g), pj.value(pj.M)
        est = cubic_form_sup(M, g, np.random.default_rng(0))
        grid = oracles.dense_sphere_sup(M, g)
        # the ascent is a lower bound, and on a fine grid it is within grid error
        assert est >= grid * (1 - 1e-3)
        assert est <= grid * (1 + 1e-3)


def test_matsumoto_norm_witness_and_randers():
    f = metric("funk_convex")
    assert matsumoto_norm(f, f.sample_point(rng), 20, 0) > 1e-3
    r = metric("randers")
    mm, cc = matsumoto_norm(r, r.sample_point(rng), 20, 0, with_cartan=True)
    assert mm <= 1e-7 * (1 + cc) and cc > 1e-3


def test_degenerate_metric_detected():
    bad = build_metric({"family": "randers", "n": 3,
                        "params": {"beta": {"constant": [1.2, 0, 0]}, "skip_validation": True}})
    with pytest.raises(DegenerateMetricError):
        fundamental_form(bad, [0, 0, 0], [-1.0, 0.1, 0.0])
