"""Catalog of concrete Finsler metrics.

Every metric evaluates ``F(x, y)`` on sequences whose entries are floats or
:class:`~finsler.jets.Jet` objects, so the same code yields values and exact
derivative jets.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from . import jets
from .errors import ApexError, BuildRejectedError, OutOfDomainError
from .jets import Jet, implicit_solve, sqrt, value_of

BALL_MARGIN = 1e-6
RANDERS_PROBES = 100
FUNK_CONVEX_PROBES = 20
SAMPLE_FRACTION = 0.7

FAMILIES = (
    "euclidean",
    "riemannian",
    "klein",
    "randers",
    "funk_ball",
    "hilbert_ball",
    "funk_convex",
    "minkowski_quartic_perturbed",
)


class Polynomial:
    """Sparse real polynomial in n variables.

    JSON form is either a number or a list of ``[coef, [e1, ..., en]]``.
    """

    def __init__(self, n: int, terms: Sequence[tuple[float, Sequence[int]]] = ()):
        self.n = n
        merged: dict[tuple, float] = {}
        for coef, exps in terms:
            exps = tuple(int(e) for e in exps)
            if len(exps) != n or any(e < 0 for e in exps):
                raise ValueError(f"bad exponent vector {list(exps)} for {n} variables")
            merged[exps] = merged.get(exps, 0.0) + float(coef)
        self.terms = [(c, e) for e, c in sorted(merged.items()) if c != 0.0]

    @classmethod
    def from_json(cls, obj, n: int) -> "Polynomial":
        if isinstance(obj, (int, float)) and not isinstance(obj, bool):
            return cls(n, [(obj, (0,) * n)])
        if not isinstance(obj, list):
            raise ValueError("polynomial must be a number or a list of [coef, exponents]")
        terms = []
        for t in obj:
            if not (isinstance(t, list) and len(t) == 2 and isinstance(t[1], list)):
                raise ValueError(f"bad polynomial term {t!r}")
            terms.append((t[0], t[1]))
        return cls(n, terms)

    def to_json(self):
        return [[c, list(e)] for c, e in self.terms]

    @classmethod
    def constant(cls, c: float, n: int) -> "Polynomial":
        return cls(n, [(c, (0,) * n)])

    def __call__(self, x: Sequence):
        powers = [[1.0, x[i]] for i in range(self.n)]
        out = 0.0
        for coef, exps in self.terms:
            term = coef
            for i, e in enumerate(exps):
                if e == 0:
                    continue
                pw = powers[i]
                while len(pw) <= e:
                    pw.append(pw[-1] * x[i])
                term = term * pw[e]
            out = out + term
        return out

    def diff(self, var: int) -> "Polynomial":
        terms = []
        for c, e in self.terms:
            if e[var]:
                f = list(e)
                f[var] -= 1
                terms.append((c * e[var], f))
        return Polynomial(self.n, terms)

    def __eq__(self, other):
        return isinstance(other, Polynomial) and self.n == other.n and self.terms == other.terms


@dataclass(frozen=True)
class MetricSpec:
    family: str
    n: int
    params: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricSpec":
        return cls(d["family"], int(d["n"]), dict(d.get("params") or {}))

    def to_dict(self) -> dict:
        return {"family": self.family, "n": self.n, "params": self.params}


def _norm2(v):
    out = 0.0
    for a in v:
        out = out + a * a
    return out


def _dot(u, v):
    out = 0.0
    for a, b in zip(u, v):
        out = out + a * b
    return out


def _unit(rng, n):
    v = rng.standard_normal(n)
    return v / np.linalg.norm(v)


class Metric:
    """A Finsler metric on a single chart of R^n."""

    family = "custom"

    def __init__(self, n: int, spec: MetricSpec | None = None, scale: float = 1.0):
        if n < 2:
            raise BuildRejectedError("dimension", f"n must be >= 2, got {n}")
        self.n = n
        self.spec = spec
        self.scale = float(scale)

    def _F(self, x, y):
        raise NotImplementedError

    def raw(self, x, y):
        """F without argument checks."""
        f = self._F(x, y)
        return f * self.scale if self.scale != 1.0 else f

    def contains(self, x) -> bool:
        return True

    def check(self, x, y):
        x0 = [value_of(a) for a in x]
        y0 = [value_of(b) for b in y]
        if len(x0) != self.n or len(y0) != self.n:
            raise ValueError(f"expected {self.n}-dimensional x and y")
        if not all(math.isfinite(v) for v in x0 + y0):
            raise ValueError("non-finite coordinates")
        if not self.contains(np.array(x0)):
            raise OutOfDomainError(f"x = {x0} outside the domain of the {self.family} metric")
        if not any(y0):
            raise ApexError("y = 0: F is not differentiable on the zero section")

    def __call__(self, x, y):
        self.check(x, y)
        return self.raw(x, y)

    def sample_point(self, rng: np.random.Generator, fraction: float = SAMPLE_FRACTION) -> np.ndarray:
        return _unit(rng, self.n) * fraction * rng.uniform()

    def sample_direction(self, rng: np.random.Generator) -> np.ndarray:
        return _unit(rng, self.n)

    def riemannian_coefficients(self, x):
        """a_ij(x) for metrics that are Riemannian, else None."""
        return None

    def __repr__(self):
        return f"<{type(self).__name__} family={self.family} n={self.n}>"


class FunctionMetric(Metric):
    """Ad-hoc metric from a jet-polymorphic callable ``fn(x, y)``."""

    def __init__(self, n: int, fn: Callable, contains: Callable | None = None, family: str = "custom"):
        super().__init__(n)
        self.fn = fn
        self._contains = contains
        self.family = family

    def _F(self, x, y):
        return self.fn(x, y)

    def contains(self, x) -> bool:
        return True if self._contains is None else bool(self._contains(x))


class Euclidean(Metric):
    family = "euclidean"

    def _F(self, x, y):
        return sqrt(_norm2(y))

    def riemannian_coefficients(self, x):
        return [[1.0 if i == j else 0.0 for j in range(self.n)] for i in range(self.n)]


class PolynomialRiemannian(Metric):
    family = "riemannian"

    def __init__(self, n, a: list[list[Polynomial]], radius: float = 1.0, **kw):
        super().__init__(n, **kw)
        self.a = a
        self.radius = radius

    def riemannian_coefficients(self, x):
        return [[self.a[i][j](x) for j in range(self.n)] for i in range(self.n)]

    def _F(self, x, y):
        a = self.riemannian_coefficients(x)
        q = 0.0
        for i in range(self.n):
            for j in range(self.n):
                q = q + a[i][j] * y[i] * y[j]
        return sqrt(q)

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        if np.linalg.norm(x) > self.radius:
            return False
        a = np.array(self.riemannian_coefficients(list(x)), dtype=float)
        return bool(np.linalg.eigvalsh(a)[0] > 0.0)

    def sample_point(self, rng, fraction=SAMPLE_FRACTION):
        return _unit(rng, self.n) * fraction * self.radius * rng.uniform()


class _Ball(Metric):
    def contains(self, x) -> bool:
        return float(np.linalg.norm(np.asarray(x, dtype=float))) <= 1.0 - BALL_MARGIN


class Klein(_Ball):
    family = "klein"

    def _F(self, x, y):
        s = 1.0 - _norm2(x)
        return sqrt(s * _norm2(y) + _dot(x, y) ** 2) / s

    def riemannian_coefficients(self, x):
        s = 1.0 - _norm2(x)
        return [
            [(1.0 if i == j else 0.0) / s + x[i] * x[j] / (s * s) for j in range(self.n)]
            for i in range(self.n)
        ]


class FunkBall(_Ball):
    family = "funk_ball"

    def _F(self, x, y):
        s = 1.0 - _norm2(x)
        xy = _dot(x, y)
        return (sqrt(s * _norm2(y) + xy * xy) + xy) / s


class HilbertBall(_Ball):
    family = "hilbert_ball"

    def __init__(self, n, **kw):
        super().__init__(n, **kw)
        self._funk = FunkBall(n)

    def _F(self, x, y):
        return 0.5 * (self._funk._F(x, y) + self._funk._F(x, [-b for b in y]))


class Randers(Metric):
    family = "randers"

    def __init__(self, n, alpha: Metric, potential: Polynomial, covector: Sequence[float], **kw):
        super().__init__(n, **kw)
        self.alpha = alpha
        self.potential = potential
        self.covector = [float(c) for c in covector]
        self._grad = [potential.diff(i) for i in range(n)]

    def beta(self, x):
        return [self._grad[i](x) + self.covector[i] for i in range(self.n)]

    def _F(self, x, y):
        return self.alpha.raw(x, y) + _dot(self.beta(x), y)

    def contains(self, x) -> bool:
        return self.alpha.contains(x)

    def sample_point(self, rng, fraction=SAMPLE_FRACTION):
        return self.alpha.sample_point(rng, fraction)

    def beta_norm(self, x) -> float:
        """alpha-norm of beta at x."""
        x = [float(v) for v in x]
        a = np.array(self.alpha.riemannian_coefficients(x), dtype=float) * self.alpha.scale ** 2
        b = np.array(self.beta(x), dtype=float)
        return float(np.sqrt(b @ np.linalg.solve(a, b)))


class FunkConvex(Metric):
    """Funk metric of the domain {Phi < 1}, defined by Phi(x + y/F) = 1."""

    family = "funk_convex"

    def __init__(self, n, phi: Polynomial, **kw):
        super().__init__(n, **kw)
        self.phi = phi

    def _residual(self, s, *xy):
        n = self.n
        return self.phi([xy[i] + s * xy[n + i] for i in range(n)]) - 1.0

    def _ray_root(self, x0, y0) -> float:
        """Smallest s > 0 with Phi(x0 + s y0) = 1 (float)."""
        f = lambda s: float(self.phi(list(x0 + s * y0))) - 1.0  # noqa: E731
        hi = 1.0
        while f(hi) < 0.0:
            hi *= 2.0
            if hi > 1e12:
                raise OutOfDomainError("ray does not leave the domain (Phi not coercive)")
        return brentq(f, 0.0, hi, xtol=1e-15, rtol=1e-15)

    def _F(self, x, y):
        x0 = np.array([value_of(a) for a in x])
        y0 = np.array([value_of(b) for b in y])
        seed = self._ray_root(x0, y0)
        s = implicit_solve(self._residual, seed, list(x) + list(y))
        return 1.0 / s

    def contains(self, x) -> bool:
        return float(self.phi(list(np.asarray(x, dtype=float)))) <= 1.0 - BALL_MARGIN

    def sample_point(self, rng, fraction=SAMPLE_FRACTION):
        d = _unit(rng, self.n)
        rho = self._ray_root(np.zeros(self.n), d)
        return d * rho * fraction * rng.uniform()


class MinkowskiQuartic(Metric):
    """F = sqrt(|y|^2 + eps * sqrt(sum y_i^4)), independent of x."""

    family = "minkowski_quartic_perturbed"

    def __init__(self, n, epsilon: float, **kw):
        super().__init__(n, **kw)
        self.epsilon = float(epsilon)

    def _F(self, x, y):
        q = 0.0
        for b in y:
            b2 = b * b
            q = q + b2 * b2
        return sqrt(_norm2(y) + self.epsilon * sqrt(q))


def default_phi(n: int) -> Polynomial:
    """|u|^2 + 0.5 sum u_i^4: convex, not an ellipsoid."""
    terms = []
    for i in range(n):
        e2 = [0] * n
        e2[i] = 2
        e4 = [0] * n
        e4[i] = 4
        terms += [(1.0, e2), (0.5, e4)]
    return Polynomial(n, terms)


def _poly_hessian(p: Polynomial, x) -> np.ndarray:
    n = p.n
    return np.array([[float(p.diff(i).diff(j)(list(x))) for j in range(n)] for i in range(n)])


def build_metric(spec: MetricSpec | dict, rng_seed: int = 12345) -> Metric:
    """Construct a metric and run its build-time checks.

    ``params["skip_validation"] = true`` bypasses the invariant checks; it
    exists for negative-control fixtures.
    """
    if isinstance(spec, dict):
        spec = MetricSpec.from_dict(spec)
    n, p, fam = spec.n, spec.params, spec.family
    scale = float(p.get("scale", 1.0))
    if not scale > 0:
        raise BuildRejectedError("scale", "scale must be positive", "/params/scale")
    validate = not p.get("skip_validation", False)
    rng = np.random.default_rng(rng_seed)
    kw = {"spec": spec, "scale": scale}

    if fam == "euclidean":
        return Euclidean(n, **kw)
    if fam == "klein":
        return Klein(n, **kw)
    if fam == "funk_ball":
        return FunkBall(n, **kw)
    if fam == "hilbert_ball":
        return HilbertBall(n, **kw)
    if fam == "minkowski_quartic_perturbed":
        eps = float(p.get("epsilon", 0.1))
        if validate and eps < 0:
            raise BuildRejectedError("epsilon", "epsilon must be >= 0", "/params/epsilon")
        return MinkowskiQuartic(n, eps, **kw)
    if fam == "riemannian":
        if "a" not in p:
            raise BuildRejectedError("coefficients", "missing a_ij", "/params/a")
        raw = p["a"]
        if len(raw) != n or any(len(row) != n for row in raw):
            raise BuildRejectedError("coefficients", f"a must be {n}x{n}", "/params/a")
        a = [[Polynomial.from_json(raw[i][j], n) for j in range(n)] for i in range(n)]
        if validate and any(a[i][j] != a[j][i] for i in range(n) for j in range(i)):
            raise BuildRejectedError("symmetry", "a_ij must equal a_ji", "/params/a")
        m = PolynomialRiemannian(n, a, radius=float(p.get("radius", 1.0)), **kw)
        if validate:
            for _ in range(RANDERS_PROBES):
                x = m.sample_point(rng, 1.0)
                ev = np.linalg.eigvalsh(np.array(m.riemannian_coefficients(list(x)), dtype=float))[0]
                if ev <= 0:
                    raise BuildRejectedError(
                        "positivity", f"a_ij not positive definite at x = {list(x)}", "/params/a"
                    )
        return m
    if fam == "randers":
        alpha_d = dict(p.get("alpha") or {"family": "euclidean"})
        alpha_d.setdefault("n", n)
        if alpha_d["family"] not in ("euclidean", "klein", "riemannian"):
            raise BuildRejectedError(
                "alpha", "alpha must be euclidean, klein or riemannian", "/params/alpha/family"
            )
        alpha = build_metric(alpha_d, rng_seed)
        beta = p.get("beta") or {}
        pot = Polynomial.from_json(beta.get("potential", 0.0), n)
        const = beta.get("constant", [0.0] * n)
        if len(const) != n:
            raise BuildRejectedError("beta", f"constant covector needs {n} entries", "/params/beta/constant")
        m = Randers(n, alpha, pot, const, **kw)
        if validate:
            worst = 0.0
            for _ in range(RANDERS_PROBES):
                worst = max(worst, m.beta_norm(m.sample_point(rng)))
            worst = max(worst, m.beta_norm(np.zeros(n)))
            if worst >= 1.0:
                raise BuildRejectedError(
                    "positivity", f"alpha-norm of beta reaches {worst:.4f} >= 1", "/params/beta"
                )
        return m
    if fam == "funk_convex":
        phi = Polynomial.from_json(p["phi"], n) if "phi" in p else default_phi(n)
        m = FunkConvex(n, phi, **kw)
        if validate:
            if not float(phi([0.0] * n)) < 1.0:
                raise BuildRejectedError("phi_origin", "Phi(0) must be < 1", "/params/phi")
            for _ in range(FUNK_CONVEX_PROBES):
                d = _unit(rng, n)
                b = d * m._ray_root(np.zeros(n), d)
                ev = np.linalg.eigvalsh(_poly_hessian(phi, b))[0]
                if ev <= 0:
                    raise BuildRejectedError(
                        "convexity", f"Hessian of Phi not positive definite at {list(b)}", "/params/phi"
                    )
        return m
    raise BuildRejectedError("family", f"unknown metric family {fam!r}", "/family")


def eval_F(m: Metric, x, y):
    return m(x, y)


def strong_convexity_check(m: Metric, x, y) -> float:
    """Smallest eigenvalue of g_ij(x, y)."""
    m.check(x, y)
    yj = jets.lift(y, 2)
    f = m.raw([float(v) for v in x], yj)
    f2 = f * f
    n = m.n
    g = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            idx = [0] * n
            idx[i] += 1
            idx[j] += 1
            g[i, j] = 0.5 * f2.partial(idx)
    return float(np.linalg.eigvalsh(g)[0])
