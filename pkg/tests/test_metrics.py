import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from catalog import CATALOG, RANDERS_KLEIN_EXACT, metric
from finsler.errors import ApexError, BuildRejectedError, OutOfDomainError
from finsler.metrics import MetricSpec, Polynomial, build_metric, default_phi, eval_F, strong_convexity_check

rng = np.random.default_rng(2024)


def test_funk_ball_reference_value():
    # F(x, y) with x = (0.2, 0, 0), y = e1: (sqrt(0.96 + 0.04) + 0.2) / 0.96
    m = metric("funk_ball")
    assert eval_F(m, [0.2, 0, 0], [1, 0, 0]) == pytest.approx(1.25, abs=1e-15)


@pytest.mark.parametrize("family", ["funk_ball", "funk_convex"])
def test_funk_point_lies_on_boundary(family):
    # the Funk metric is defined by x + y / F(x, y) lying on the boundary
    m = metric(family)
    phi = default_phi(3)
    for _ in range(20):
        x, y = m.sample_point(rng), m.sample_direction(rng) * rng.uniform(0.2, 3)
        b = x + y / m(x, y)
        level = np.linalg.norm(b) ** 2 if family == "funk_ball" else float(phi(list(b)))
        assert level == pytest.approx(1.0, abs=1e-13)


def test_hilbert_ball_is_klein():
    h, k = metric("hilbert_ball"), metric("klein")
    for _ in range(20):
        x, y = k.sample_point(rng), k.sample_direction(rng)
        assert h(x, y) == pytest.approx(k(x, y), rel=1e-14)


def test_klein_closed_form():
    k = metric("klein")
    x, y = np.array([0.1, -0.3, 0.2]), np.array([1.0, 0.5, -2.0])
    s = 1 - x @ x
    assert k(x, y) == pytest.approx(math.sqrt(s * (y @ y) + (x @ y) ** 2) / s, rel=1e-15)


def test_randers_is_alpha_plus_beta():
    r = metric("randers")
    k = metric("klein")
    x, y = np.array([0.2, 0.4, -0.1]), np.array([0.3, -1.0, 0.5])
    beta = np.array([0.05 * x[1], 0.05 * x[0] + 0.05, 0.0])
    assert r(x, y) == pytest.approx(k(x, y) + beta @ y, rel=1e-15)


def test_minkowski_quartic_closed_form():
    m = metric("minkowski_quartic_perturbed")
    y = np.array([1.0, -2.0, 0.5])
    assert m(np.zeros(3), y) == pytest.approx(math.sqrt(y @ y + 0.1 * math.sqrt(np.sum(y**4))))


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(sorted(CATALOG)), st.floats(0.1, 10.0), st.integers(0, 10_000))
def test_positive_homogeneity(name, lam, seed):
    m = metric(name)
    r = np.random.default_rng(seed)
    x, y = m.sample_point(r), m.sample_direction(r)
    assert m(x, lam * y) == pytest.approx(lam * m(x, y), rel=1e-12)
    assert m(x, y) > 0


def test_funk_is_not_reversible():
    m = metric("funk_ball")
    x, y = [0.3, 0.0, 0.0], [1.0, 0.0, 0.0]
    assert m(x, y) != pytest.approx(m(x, [-1.0, 0.0, 0.0]))


def test_scale_param_multiplies_F():
    a = build_metric({"family": "funk_convex", "n": 3})
    b = build_metric({"family": "funk_convex", "n": 3, "params": {"scale": 0.5}})
    x, y = [0.1, 0.2, -0.1], [0.3, 1.0, 0.2]
    assert b(x, y) == pytest.approx(0.5 * a(x, y), rel=1e-15)


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_strong_convexity(name):
    m = metric(name)
    for _ in range(10):
        assert strong_convexity_check(m, m.sample_point(rng), m.sample_direction(rng)) > 0


def test_domain_and_apex_errors():
    m = metric("funk_ball")
    with pytest.raises(OutOfDomainError):
        m([1.0, 0.0, 0.0], [1.0, 0.0, 0.0])
    with pytest.raises(ApexError):
        m([0.0, 0.0, 0.0], [0.0, 0.0, 0.0])


@pytest.mark.parametrize(
    "spec, check, path",
    [
        ({"family": "randers", "n": 3, "params": {"beta": {"constant": [1.2, 0, 0]}}}, "positivity", "/params/beta"),
        ({"family": "randers", "n": 3, "params": {"alpha": {"family": "klein"}, "beta": {"constant": [0, 1.0, 0]}}},
         "positivity", "/params/beta"),
        ({"family": "funk_convex", "n": 3, "params": {"phi": [[1.0, [0, 0, 0]], [1.0, [2, 0, 0]]]}},
         "phi_origin", "/params/phi"),
        ({"family": "riemannian", "n": 2, "params": {"a": [[1, 0.1], [0, 1]]}}, "symmetry", "/params/a"),
        ({"family": "riemannian", "n": 2, "params": {"a": [[1, 0], [0, -1]]}}, "positivity", "/params/a"),
        ({"family": "bogus", "n": 3}, "family", "/family"),
    ],
)
def test_build_rejections(spec, check, path):
    with pytest.raises(BuildRejectedError) as info:
        build_metric(spec)
    assert info.value.check == check
    assert info.value.path == path


def test_skip_validation_bypasses_guard():
    m = build_metric({"family": "randers", "n": 3,
                      "params": {"beta": {"constant": [1.2, 0, 0]}, "skip_validation": True}})
    # F = |y| + 1.2 y1 is not even positive
    assert m([0, 0, 0], [-1.0, 0, 0]) < 0


def test_randers_beta_norm_is_alpha_dual_norm():
    m = build_metric(RANDERS_KLEIN_EXACT)
    x = np.array([0.3, -0.2, 0.1])
    s = 1 - x @ x
    a = (np.eye(3) * s + np.outer(x, x)) / s**2
    b = np.array([0.05 * x[1], 0.05 * x[0] + 0.05, 0.0])
    assert m.beta_norm(x) == pytest.approx(math.sqrt(b @ np.linalg.solve(a, b)), rel=1e-13)


def test_polynomial_json_roundtrip_and_diff():
    p = Polynomial.from_json([[2.0, [2, 1]], [-1.0, [0, 0]], [0.5, [2, 1]]], 2)
    assert p == Polynomial.from_json(p.to_json(), 2)
    assert p([1.5, 2.0]) == pytest.approx(2.5 * 1.5**2 * 2 - 1)
    assert p.diff(0)([1.5, 2.0]) == pytest.approx(2.5 * 2 * 1.5 * 2)
    assert Polynomial.from_json(3.0, 2)([7.0, 1.0]) == 3.0


def test_metric_spec_roundtrip():
    spec = MetricSpec.from_dict(CATALOG["randers"])
    assert MetricSpec.from_dict(spec.to_dict()) == spec
