"""Geodesic flow, linear parallel transport and Landsberg curvature."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import AccuracyError, InconsistencyError, OutOfDomainError
from .metrics import Metric
from .tensors import ORDER_CONNECTION, ORDER_FULL, ORDER_SPRAY, ORDER_VERTICAL, PointJets, TensorValue

MIN_STEPS = 16
SPEED_DRIFT_MAX = 1e-5
FLOW_H = 1e-3
LANDSBERG_AGREE = 1e-6
LANDSBERG_FAIL = 1e-5


@dataclass
class GeodesicPath:
    metric: Metric
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    step: float
    exit_time: float | None = None

    @property
    def truncated(self) -> bool:
        return self.exit_time is not None

    def speed(self) -> np.ndarray:
        return np.array([self.metric.raw(list(a), list(b)) for a, b in zip(self.x, self.y)])

    def rows(self):
        for t, x, y in zip(self.t, self.x, self.y):
            yield [t, *x, *y]

    def header(self) -> list[str]:
        n = self.x.shape[1]
        return ["t"] + [f"x{i + 1}" for i in range(n)] + [f"y{i + 1}" for i in range(n)]

    def to_csv(self, dest=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header())
        for row in self.rows():
            w.writerow([repr(float(v)) for v in row])
        text = buf.getvalue()
        if dest is not None:
            Path(dest).write_text(text)
        return text


@dataclass
class ParallelFrame:
    path: GeodesicPath
    U: np.ndarray  # [sample, vector, component]


def _rhs(m: Metric, x, y, U):
    if U is None:
        pj = PointJets(m, x, y, ORDER_SPRAY, horizontal=True)
        return y, -2.0 * pj.value(pj.G), None
    pj = PointJets(m, x, y, ORDER_CONNECTION, horizontal=True)
    N = pj.value(pj.N)
    return y, -2.0 * pj.value(pj.G), -U @ N.T


def _flow(m: Metric, x0, y0, T: float, steps: int, U0=None):
    """Fixed-step RK4 on x' = y, y' = -2 G(x, y), U' = -N(x, y) U."""
    h = T / steps
    x = np.array(x0, dtype=float)
    y = np.array(y0, dtype=float)
    U = None if U0 is None else np.atleast_2d(np.array(U0, dtype=float))
    xs, ys, Us = [x], [y], [U]
    exit_time = None
    for k in range(steps):
        try:
            k1 = _rhs(m, x, y, U)
            k2 = _rhs(m, x + 0.5 * h * k1[0], y + 0.5 * h * k1[1], None if U is None else U + 0.5 * h * k1[2])
            k3 = _rhs(m, x + 0.5 * h * k2[0], y + 0.5 * h * k2[1], None if U is None else U + 0.5 * h * k2[2])
            k4 = _rhs(m, x + h * k3[0], y + h * k3[1], None if U is None else U + h * k3[2])
        except OutOfDomainError:
            exit_time = k * h
            break
        x = x + h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        y = y + h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        if U is not None:
            U = U + h / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        if not m.contains(x):
            exit_time = (k + 1) * h
            break
        xs.append(x)
        ys.append(y)
        Us.append(U)
    t = h * np.arange(len(xs))
    Uarr = None if U0 is None else np.array(Us)
    return t, np.array(xs), np.array(ys), Uarr, exit_time


def integrate_geodesic(m: Metric, x0, y0, T: float, steps: int, check_speed: bool = True) -> GeodesicPath:
    """Geodesic with sigma(0) = x0, sigma'(0) = y0 sampled at ``steps + 1`` uniform times.

    A path that leaves the domain is returned truncated with ``exit_time``
    set.  Relative speed drift above 1e-5 raises :class:`AccuracyError`.
    """
    if steps < MIN_STEPS:
        raise AccuracyError(f"steps = {steps} below the minimum", MIN_STEPS)
    m.check(x0, y0)
    if not m.raw(list(map(float, x0)), list(map(float, y0))) > 0:
        raise ValueError("F(x0, y0) must be positive")
    t, xs, ys, _, exit_time = _flow(m, x0, y0, T, steps)
    path = GeodesicPath(m, t, xs, ys, T / steps, exit_time)
    if check_speed:
        F = path.speed()
        drift = np.abs(F - F[0]).max() / F[0]
        if drift > SPEED_DRIFT_MAX:
            raise AccuracyError(f"speed drift {drift:.2e} exceeds {SPEED_DRIFT_MAX:g}", 2 * steps)
    return path


def parallel_transport(m: Metric, path: GeodesicPath, U0) -> ParallelFrame:
    """Linearly parallel fields along ``path`` with initial values ``U0``.

    The geodesic is re-integrated jointly with the transport so N is
    evaluated at the genuine RK stage states.
    """
    U0 = np.atleast_2d(np.asarray(U0, dtype=float))
    steps = len(path.t) - 1 if path.exit_time is None else round(path.t[-1] / path.step)
    T = path.step * steps
    t, xs, ys, U, _ = _flow(m, path.x[0], path.y[0], T, steps, U0)
    k = min(len(t), len(path.t))
    if not np.allclose(xs[:k], path.x[:k], rtol=0, atol=1e-12 * max(1.0, np.abs(path.x).max())):
        raise InconsistencyError("transport re-integration departed from the stored path")
    return ParallelFrame(path, U[:k])


# ---------------------------------------------------------------------------
# derivatives along the flow

def _frame_contract(T: np.ndarray, E: np.ndarray) -> np.ndarray:
    """Components of T in the frame whose rows are E."""
    out = T
    for _ in range(T.ndim):
        # contract the leading original index, append the frame index at the end
        out = np.tensordot(out, E, axes=([0], [1]))
    return out


def flow_derivative(m: Metric, x, y, quantity: Callable[[PointJets], np.ndarray], order: int,
                    horizontal: bool, h: float | None = None):
    """d/dt at t = 0 of ``quantity`` along the geodesic, in a parallel frame.

    ``quantity`` maps a :class:`PointJets` to a covariant tensor (or a tuple
    of them, giving a tuple of results); each is
    contracted with the coordinate basis transported from t = 0.  Central
    differences at h and h/2 are Richardson-combined (error O(h^4)).
    Returns ``(derivative, error_estimate)``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if h is None:
        h = FLOW_H / np.linalg.norm(y)
    n = m.n
    vals = {}
    many = False
    for sign in (1, -1):
        _, xs, ys, U, exit_time = _flow(m, x, y, sign * h, 4, np.eye(n))
        if exit_time is not None:
            raise OutOfDomainError("flow left the domain while differencing")
        for idx, frac in ((2, 0.5), (4, 1.0)):
            pj = PointJets(m, xs[idx], ys[idx], order, horizontal)
            q = quantity(pj)
            many = isinstance(q, tuple)
            q = q if many else (q,)
            vals[sign * frac] = [_frame_contract(np.asarray(a), U[idx]) for a in q]
    out = []
    for k in range(len(vals[1.0])):
        d1 = (vals[1.0][k] - vals[-1.0][k]) / (2 * h)
        d2 = (vals[0.5][k] - vals[-0.5][k]) / h
        rich = (4 * d2 - d1) / 3
        out.append((rich, float(np.abs(rich - d2).max())))
    return tuple(out) if many else out[0]


def landsberg_transport(m: Metric, x, y, h: float | None = None):
    """Landsberg curvature as the t-derivative of C along the flow."""
    return flow_derivative(m, x, y, lambda pj: pj.value(pj.C), ORDER_VERTICAL, False, h)


def mean_landsberg_transport(m: Metric, x, y, h: float | None = None):
    """Mean Landsberg curvature as the t-derivative of I along the flow."""
    return flow_derivative(m, x, y, lambda pj: pj.value(pj.I), ORDER_VERTICAL, False, h)


def landsberg(m: Metric, x, y, check: bool = True) -> TensorValue:
    """L_ijk from the closed form, optionally cross-checked by transport."""
    pj = PointJets(m, x, y, ORDER_FULL, horizontal=True)
    L = pj.value(pj.L)
    if check:
        Lt, _ = landsberg_transport(m, x, y)
        dev = np.abs(L - Lt).max()
        if dev > LANDSBERG_FAIL * max(1.0, np.abs(L).max()):
            raise InconsistencyError(f"Landsberg routes disagree by {dev:.3e}")
    return TensorValue(pj.x.copy(), pj.y.copy(), L, True)


def mean_landsberg(m: Metric, x, y) -> TensorValue:
    pj = PointJets(m, x, y, ORDER_FULL, horizontal=True)
    return TensorValue(pj.x.copy(), pj.y.copy(), pj.value(pj.J), False)
