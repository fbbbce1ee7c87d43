"""Pointwise Finsler tensors at a fixed (x, y).

Everything is read off Taylor jets of F: a :class:`PointJets` expands F
around (x, y) either in the fibre variables only ("vertical", enough for
g, C, I, h, M) or in (x, y) jointly ("horizontal", needed for the spray and
everything built from it).  Quantities are held as jet arrays so that
further derivatives (N = dG/dy, E, Landsberg, vertical derivatives of the
Riemann curvature) are exact.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import jets
from .errors import DegenerateMetricError, FinslerError, InconsistencyError
from .jets import Jet
from .metrics import Metric

# F-jet order needed per quantity, horizontal expansion
ORDER_SPRAY = 2
ORDER_CONNECTION = 3
ORDER_CURVATURE = 4
ORDER_FULL = 5  # E, closed-form Landsberg, vertical curvature derivative
ORDER_VERTICAL = 3


@dataclass(frozen=True)
class TensorValue:
    x: np.ndarray
    y: np.ndarray
    components: np.ndarray
    symmetric: bool

    @property
    def rank(self) -> int:
        return self.components.ndim

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.components, dtype=dtype)


def _eye_jets(n: int, nv: int, order: int) -> np.ndarray:
    out = np.zeros((n, n, jets.n_coeffs(nv, order)))
    out[np.arange(n), np.arange(n), 0] = 1.0
    return out


def jet_inverse(a: np.ndarray, nv: int) -> np.ndarray:
    """Inverse of a jet-valued square matrix (Gauss-Jordan, no pivoting).

    Intended for positive definite matrices such as g_ij.
    """
    a = np.array(a, dtype=float, copy=True)
    n = a.shape[0]
    b = _eye_jets(n, nv, jets.order_of(a, nv))
    for k in range(n):
        r = jets.reciprocal(a[k, k], nv)
        a[k] = jets.mul(a[k], r, nv)
        b[k] = jets.mul(b[k], r, nv)
        f = a[:, k].copy()
        f[k] = 0.0
        a = a - jets.mul(f[:, None], a[k][None], nv)
        b = b - jets.mul(f[:, None], b[k][None], nv)
    return b


class PointJets:
    """Jet expansions of F and derived quantities around one point (x, y).

    Horizontal layout puts x^1..x^n first and y^1..y^n after them.
    """

    def __init__(self, m: Metric, x, y, order: int, horizontal: bool = False):
        m.check(x, y)
        self.metric = m
        self.n = n = m.n
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.order = order
        self.horizontal = horizontal
        if horizontal:
            self.nv = nv = 2 * n
            xv = jets.variables(self.x, nv, order, 0)
            yv = jets.variables(self.y, nv, order, n)
            xs = [Jet(r, nv) for r in xv]
            self._yoff = n
        else:
            self.nv = nv = n
            yv = jets.variables(self.y, nv, order, 0)
            xs = [float(v) for v in self.x]
            self._yoff = 0
        self.yv = yv
        f = m.raw(xs, [Jet(r, nv) for r in yv])
        self.F = f.coeffs

    # -- helpers --------------------------------------------------------
    def mul(self, a, b):
        return jets.mul(a, b, self.nv)

    def dy(self, a, i):
        return jets.deriv(a, self._yoff + i, self.nv)

    def dx(self, a, i):
        if not self.horizontal:
            raise FinslerError("x-derivatives need a horizontal expansion")
        return jets.deriv(a, i, self.nv)

    def grad_y(self, a):
        """Stack of y-derivatives as a new axis placed before the coefficient axis."""
        return np.stack([self.dy(a, i) for i in range(self.n)], axis=-2)

    def grad_x(self, a):
        return np.stack([self.dx(a, i) for i in range(self.n)], axis=-2)

    @staticmethod
    def value(a):
        return np.asarray(a)[..., 0]

    # -- vertical quantities --------------------------------------------
    @cached_property
    def F2(self):
        return self.mul(self.F, self.F)

    @cached_property
    def g(self):
        g = 0.5 * self.grad_y(self.grad_y(self.F2))
        g0 = self.value(g)
        ev = np.linalg.eigvalsh(g0)
        if ev[0] <= 1e-12 * max(abs(ev[-1]), 1e-300):
            raise DegenerateMetricError(float(ev[0]))
        return g

    @cached_property
    def ginv(self):
        return jet_inverse(self.g, self.nv)

    @cached_property
    def y_lower(self):
        """y_i = g_ij y^j."""
        return self.mul(self.g, self.yv[None]).sum(axis=1)

    @cached_property
    def C(self):
        return 0.5 * self.grad_y(self.g)

    @cached_property
    def I(self):  # noqa: E743
        return self.mul(self.ginv[None], self.C).sum(axis=(1, 2))

    @cached_property
    def h(self):
        yl = self.y_lower
        inv = jets.reciprocal(self.F2, self.nv)
        return jets.sub(self.g, self.mul(self.mul(yl[:, None], yl[None]), inv))

    @cached_property
    def M(self):
        I, h = self.I, self.h
        s = (
            self.mul(I[:, None, None], h[None])
            + self.mul(I[None, :, None], h[:, None])
            + self.mul(I[None, None, :], h[:, :, None])
        )
        return jets.sub(self.C, s / (self.n + 1))

    # -- horizontal quantities ------------------------------------------
    @cached_property
    def G(self):
        """Spray coefficients G^i."""
        F2x = self.grad_x(self.F2)  # [l]
        F2xy = self.grad_y(F2x)  # [k, l]
        t = jets.sub(self.mul(F2xy, self.yv[:, None]).sum(axis=0), F2x)
        return 0.25 * self.mul(self.ginv, t[None]).sum(axis=1)

    @cached_property
    def N(self):
        """N^i_j = dG^i/dy^j, indexed [i, j]."""
        return self.grad_y(self.G)

    @cached_property
    def K(self):
        """Riemann curvature K^i_k by the spray formula, indexed [i, k]."""
        G, N = self.G, self.N
        Gx = self.grad_x(G)  # [i, k]
        Gyx = self.grad_x(N)  # [i, k, j] = d2 G^i / dy^k dx^j
        Gyy = self.grad_y(N)  # [i, j, k]
        t1 = 2.0 * Gx
        t2 = self.mul(Gyx, self.yv[None, None]).sum(axis=2)
        t3 = 2.0 * self.mul(G[None, :, None], Gyy).sum(axis=1)
        t4 = self.mul(N[:, :, None], N[None]).sum(axis=1)
        return jets.sub(jets.add(t1, t3), jets.add(t2, t4))

    @cached_property
    def K_dot(self):
        """Vertical derivative K^i_{k.l}, indexed [i, k, l]."""
        return self.grad_y(self.K)

    @cached_property
    def scalar_K(self):
        """Trace form K = K^m_m / ((n - 1) F^2) as a jet."""
        tr = self.K[np.arange(self.n), np.arange(self.n)].sum(axis=0)
        return self.mul(tr, jets.reciprocal(self.F2, self.nv)) / (self.n - 1)

    @cached_property
    def E(self):
        div = self.N[np.arange(self.n), np.arange(self.n)].sum(axis=0)
        return 0.5 * self.grad_y(self.grad_y(div))

    @cached_property
    def L(self):
        """Landsberg curvature from L_ijk = -1/2 y_l G^l_{y^i y^j y^k}."""
        G3 = self.grad_y(self.grad_y(self.N))  # [l, i, j, k]
        return -0.5 * self.mul(self.y_lower[:, None, None, None], G3).sum(axis=0)

    @cached_property
    def J(self):
        return self.mul(self.ginv[None], self.L).sum(axis=(1, 2))


def _tv(pj: PointJets, a, symmetric: bool) -> TensorValue:
    return TensorValue(pj.x.copy(), pj.y.copy(), np.array(PointJets.value(a)), symmetric)


def fundamental_form(m: Metric, x, y) -> TensorValue:
    pj = PointJets(m, x, y, 2)
    return _tv(pj, pj.g, True)


def inverse_metric(g) -> np.ndarray:
    return np.linalg.inv(np.asarray(g, dtype=float))


def cartan_torsion(m: Metric, x, y) -> TensorValue:
    pj = PointJets(m, x, y, ORDER_VERTICAL)
    return _tv(pj, pj.C, True)


def mean_cartan(m: Metric, x, y) -> TensorValue:
    pj = PointJets(m, x, y, ORDER_VERTICAL)
    return _tv(pj, pj.I, False)


def angular_metric(m: Metric, x, y) -> TensorValue:
    """h_ij = g_ij - y_i y_j / F^2, cross-checked against F F_{y^i y^j}."""
    pj = PointJets(m, x, y, 2)
    h = PointJets.value(pj.h)
    F = pj.F
    hess = np.array([[pj.dy(pj.dy(F, i), j)[0] for j in range(pj.n)] for i in range(pj.n)])
    alt = F[0] * hess
    scale = max(1.0, np.abs(h).max())
    if np.abs(h - alt).max() > 1e-11 * scale:
        raise InconsistencyError(
            f"angular metric formulas disagree by {np.abs(h - alt).max():.3e}"
        )
    return TensorValue(pj.x.copy(), pj.y.copy(), h, True)


def matsumoto_torsion(m: Metric, x, y) -> TensorValue:
    pj = PointJets(m, x, y, ORDER_VERTICAL)
    return _tv(pj, pj.M, True)


def spray(m: Metric, x, y) -> TensorValue:
    pj = PointJets(m, x, y, ORDER_SPRAY, horizontal=True)
    return _tv(pj, pj.G, False)


def nonlinear_connection(m: Metric, x, y) -> TensorValue:
    pj = PointJets(m, x, y, ORDER_CONNECTION, horizontal=True)
    return _tv(pj, pj.N, False)


def mean_berwald(m: Metric, x, y) -> TensorValue:
    pj = PointJets(m, x, y, ORDER_FULL, horizontal=True)
    return _tv(pj, pj.E, True)


def cubic_form_sup(T: np.ndarray, g: np.ndarray, rng: np.random.Generator | None = None,
                   steps: int = 20, restarts: int = 2) -> float:
    """Lower bound for sup |T(u,u,u)| / g(u,u)^{3/2} by power-style ascent.

    For symmetric trilinear forms on an inner-product space the supremum over
    independent (u, v, w) equals the one over u = v = w, so rank-one probes
    suffice.
    """
    L = np.linalg.cholesky(g)
    P = np.linalg.inv(L).T  # columns: g-orthonormal basis
    S = np.einsum("ijk,ia,jb,kc->abc", T, P, P, P)
    n = S.shape[0]
    starts = list(np.eye(n))
    if rng is not None:
        starts += [v / np.linalg.norm(v) for v in rng.standard_normal((restarts, n))]
    best = 0.0
    for v in starts:
        for _ in range(steps):
            w = np.einsum("abc,b,c->a", S, v, v)
            val = abs(w @ v)
            best = max(best, val)
            nw = np.linalg.norm(w)
            if nw == 0.0:
                break
            v = w / nw
        best = max(best, abs(np.einsum("abc,a,b,c->", S, v, v, v)))
    return float(best)


def matsumoto_norm(m: Metric, x, n_samples: int, rng: np.random.Generator | int | None = 0,
                   with_cartan: bool = False):
    """Sampled lower bound of the Matsumoto torsion norm at x.

    Directions y are drawn uniformly on the Euclidean unit sphere; for each,
    ``cubic_form_sup`` finds a good probe direction.  With
    ``with_cartan=True`` the same estimate for the Cartan torsion is
    returned as a second value.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    best_m = best_c = 0.0
    for _ in range(n_samples):
        y = m.sample_direction(rng)
        pj = PointJets(m, x, y, ORDER_VERTICAL)
        g = pj.value(pj.g)
        F = pj.F[0]
        best_m = max(best_m, F * cubic_form_sup(pj.value(pj.M), g, rng))
        if with_cartan:
            best_c = max(best_c, F * cubic_form_sup(pj.value(pj.C), g, rng))
    return (best_m, best_c) if with_cartan else best_m
