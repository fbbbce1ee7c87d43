import csv
import io

import numpy as np
import pytest
from scipy.integrate import solve_ivp

import oracles
from catalog import metric, random_polynomial_riemannian, samples
from finsler.errors import AccuracyError
from finsler.geodesics import (
    integrate_geodesic,
    landsberg,
    landsberg_transport,
    mean_landsberg,
    mean_landsberg_transport,
    parallel_transport,
)
from finsler.metrics import build_metric
from finsler.tensors import PointJets

rng = np.random.default_rng(11)


def test_funk_ball_geodesic_closed_form():
    m = metric("funk_ball")
    y0 = np.array([0.6, 0.0, 0.8])
    path = integrate_geodesic(m, np.zeros(3), y0, 3.0, 300)
    assert not path.truncated
    assert np.abs(path.x - oracles.funk_ball_geodesic(y0, path.t)).max() < 1e-9


def test_funk_backward_geodesic_leaves_the_domain():
    # backwards along a ray the Funk distance to the boundary is finite
    m = metric("funk_ball")
    # x(t) = (1 - e^{-t}) e1 reaches the far side x1 = -1 at t = -ln 2
    path = integrate_geodesic(m, np.zeros(3), np.array([1.0, 0, 0]), -5.0, 200, check_speed=False)
    assert path.truncated
    assert -np.log(2) - abs(path.step) <= path.exit_time <= -np.log(2) + abs(path.step)
    assert np.all(np.linalg.norm(path.x, axis=1) < 1)
    assert np.abs(path.x - oracles.funk_ball_geodesic(np.array([1.0, 0, 0]), path.t)).max() < 1e-6


def test_klein_geodesics_are_straight():
    m = metric("klein")
    for x, y in samples(m, rng, 3):
        path = integrate_geodesic(m, x, y, 1.0, 100)
        d = path.x - x
        cross = np.cross(d, y)
        assert np.abs(cross).max() < 1e-10


def test_riemannian_geodesic_against_scipy():
    spec = random_polynomial_riemannian(3)
    m = build_metric(spec)
    lc = oracles.riemannian_levi_civita(spec)
    x0, y0 = np.array([0.05, -0.1, 0.1]), np.array([0.3, 0.2, -0.1])

    def rhs(t, z):
        x, y = z[:3], z[3:]
        return np.concatenate([y, -2 * lc.spray(x, y)])

    path = integrate_geodesic(m, x0, y0, 1.0, 200)
    sol = solve_ivp(rhs, (0, 1.0), np.concatenate([x0, y0]), t_eval=path.t, rtol=1e-12, atol=1e-14)
    assert np.abs(path.x - sol.y[:3].T).max() < 1e-10
    assert np.abs(path.y - sol.y[3:].T).max() < 1e-10


@pytest.mark.parametrize("name", ["funk_convex", "randers", "minkowski_quartic_perturbed"])
def test_speed_is_conserved(name):
    m = metric(name)
    x, y = m.sample_point(rng), m.sample_direction(rng)
    F = integrate_geodesic(m, x, y, 0.5, 100).speed()
    assert np.abs(F - F[0]).max() < 1e-9 * F[0]


def test_too_few_steps_suggests_minimum():
    m = metric("klein")
    with pytest.raises(AccuracyError) as info:
        integrate_geodesic(m, np.zeros(3), np.array([1.0, 0, 0]), 1.0, 4)
    assert info.value.suggested_steps >= 16


def test_path_csv_columns():
    m = metric("klein")
    path = integrate_geodesic(m, np.zeros(3), np.array([0.5, 0, 0]), 1.0, 16)
    rows = list(csv.reader(io.StringIO(path.to_csv())))
    assert rows[0] == ["t", "x1", "x2", "x3", "y1", "y2", "y3"]
    assert len(rows) == 18
    assert float(rows[-1][0]) == pytest.approx(1.0)


def test_parallel_transport_preserves_inner_products():
    # linear parallel transport along a geodesic is an isometry of g_{sigma'}
    m = metric("funk_convex")
    x, y = m.sample_point(rng), m.sample_direction(rng)
    path = integrate_geodesic(m, x, y, 1.0, 100)
    U0 = np.array([[1.0, 0.2, 0.0], [0.0, 1.0, -0.5]])
    frame = parallel_transport(m, path, U0)
    gram0 = None
    for xk, yk, Uk in zip(path.x, path.y, frame.U):
        pj = PointJets(m, xk, yk, 2)
        gram = Uk @ pj.value(pj.g) @ Uk.T
        gram0 = gram if gram0 is None else gram0
        assert np.abs(gram - gram0).max() < 1e-9
    # the velocity is itself parallel
    assert np.allclose(parallel_transport(m, path, y).U[-1, 0], path.y[-1], atol=1e-9)


def test_landsberg_dual_routes():
    m = metric("funk_ball")
    for x, y in samples(m, rng, 3):
        L = landsberg(m, x, y).components
        Lt, err = landsberg_transport(m, x, y)
        assert np.abs(L - Lt).max() <= 1e-6 * max(1, np.abs(L).max())
        assert err < 1e-6
        J = mean_landsberg(m, x, y).components
        Jt, _ = mean_landsberg_transport(m, x, y)
        assert np.abs(J - Jt).max() <= 1e-6 * max(1, np.abs(J).max())


def test_landsberg_vanishes_for_riemannian():
    m = metric("klein")
    x, y = m.sample_point(rng), m.sample_direction(rng)
    assert np.abs(landsberg(m, x, y).components).max() < 1e-12
