"""Riemann and flag curvature, scalar-curvature identities, Matsumoto profiles."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import AccuracyError, DegenerateFlagError, NotScalarCurvatureError
from .geodesics import MIN_STEPS, _flow, flow_derivative
from .metrics import Metric
from .tensors import ORDER_CURVATURE, ORDER_FULL, PointJets

SCALAR_PRECONDITION = 1e-6
SCALAR_ATOL = 1e-12
FLAG_MIN_NORM = 1e-10
MVC_NONZERO = 1e-12
FD_COARSE_FRACTION = 0.1


@dataclass(frozen=True)
class CurvatureValue:
    x: np.ndarray
    y: np.ndarray
    K: np.ndarray  # K^i_k, indexed [i, k]
    g: np.ndarray
    F: float

    @property
    def norm(self) -> float:
        return float(np.abs(self.K).max())

    def annihilation_residual(self) -> float:
        """max |K_y(y)|, relative to the size of K."""
        return float(np.abs(self.K @ self.y).max() / max(self.norm * np.abs(self.y).max(), 1e-300))

    def self_adjoint_residual(self) -> float:
        """Asymmetry of g_ij K^j_k, relative to its size."""
        gK = self.g @ self.K
        return float(np.abs(gK - gK.T).max() / max(np.abs(gK).max(), 1e-300))


def _curvature_value(pj: PointJets) -> CurvatureValue:
    return CurvatureValue(pj.x.copy(), pj.y.copy(), pj.value(pj.K), pj.value(pj.g), float(pj.F[0]))


def riemann_curvature(m: Metric, x, y) -> CurvatureValue:
    return _curvature_value(PointJets(m, x, y, ORDER_CURVATURE, horizontal=True))


def flag_curvature(m: Metric, x, y, u) -> float:
    """K(P, y) for the plane P spanned by y and u."""
    cv = riemann_curvature(m, x, y)
    return _flag_from(cv, np.asarray(u, dtype=float))


def _flag_from(cv: CurvatureValue, u: np.ndarray) -> float:
    g = cv.g
    yh = cv.y / cv.F
    perp = u - (u @ g @ yh) * yh
    nrm = math.sqrt(max(perp @ g @ perp, 0.0))
    if nrm <= FLAG_MIN_NORM * math.sqrt(u @ g @ u):
        raise DegenerateFlagError("u is parallel to the flagpole y")
    perp = perp / nrm
    return float(perp @ g @ (cv.K / cv.F**2) @ perp)


def scalar_flag(m: Metric, x, y) -> float:
    pj = PointJets(m, x, y, ORDER_CURVATURE, horizontal=True)
    return float(pj.value(pj.scalar_K))


def _scalar_residual(pj: PointJets) -> float:
    K = pj.value(pj.K)
    h_mixed = np.linalg.solve(pj.value(pj.g), pj.value(pj.h))
    return float(np.abs(K - pj.value(pj.scalar_K) * pj.value(pj.F2) * h_mixed).max())


def scalar_residual(m: Metric, x, y) -> float:
    """max_{i,k} |K^i_k - K F^2 h^i_k| with K the trace-determined scalar."""
    return _scalar_residual(PointJets(m, x, y, ORDER_CURVATURE, horizontal=True))


def _require_scalar(pj: PointJets):
    res = _scalar_residual(pj)
    scale = np.abs(pj.value(pj.K)).max()
    if res > SCALAR_PRECONDITION * scale + SCALAR_ATOL:
        raise NotScalarCurvatureError(
            f"scalar-curvature residual {res:.3e} exceeds {SCALAR_PRECONDITION:g} x |K| = {scale:.3e}"
        )
    return res


def vertical_curvature_derivative(m: Metric, x, y) -> np.ndarray:
    """K^i_{k.l} = dK^i_k/dy^l, indexed [i, k, l]."""
    pj = PointJets(m, x, y, ORDER_FULL, horizontal=True)
    return pj.value(pj.K_dot)


def _mkdiff_terms(pj: PointJets):
    n = pj.n
    Kd = pj.value(pj.K_dot)
    Ks = pj.scalar_K
    K = float(pj.value(Ks))
    K_dot = np.array([pj.dy(Ks, l)[0] for l in range(n)])
    F2 = float(pj.value(pj.F2))
    g = pj.value(pj.g)
    h_mixed = np.linalg.solve(g, pj.value(pj.h))
    yl = g @ pj.y
    eye = np.eye(n)
    first = F2 * np.einsum("ik,l->ikl", h_mixed, K_dot)
    second = K * (
        2 * np.einsum("ik,l->ikl", eye, yl)
        - np.einsum("k,il->ikl", yl, eye)
        - np.einsum("kl,i->ikl", g, pj.y)
    )
    return Kd, first, second


def mkdiff_residual(m: Metric, x, y) -> float:
    """Max deviation of K^i_{k.l} from its scalar-curvature expression."""
    pj = PointJets(m, x, y, ORDER_FULL, horizontal=True)
    _require_scalar(pj)
    Kd, first, second = _mkdiff_terms(pj)
    return float(np.abs(Kd - first - second).max())


@dataclass
class IdentityResidual:
    name: str
    residual: float
    scale: float
    fd_error: float = 0.0
    skipped: str | None = None

    @property
    def relative(self) -> float:
        return self.residual / self.scale if self.scale > 0 else 0.0


def _scale(*terms, floor: float = 0.0) -> float:
    return float(max(floor, *(np.abs(t).max() for t in terms)))


def identity_residuals(m: Metric, x, y, h: float | None = None) -> dict[str, IdentityResidual]:
    """Residuals of the scalar-curvature identity chain at (x, y).

    Horizontal derivatives L_{ijk|m} y^m and J_{k|m} y^m are t-derivatives
    along the geodesic in a parallel frame; right-hand sides come from jets.
    MKdiff, AZeq1 and AZeq2 are skipped when F is not of scalar curvature
    at (x, y).
    """
    pj = PointJets(m, x, y, ORDER_FULL, horizontal=True)
    n = pj.n
    (dL, errL), (dJ, errJ) = flow_derivative(
        m, x, y, lambda q: (q.value(q.L), q.value(q.J)), ORDER_FULL, True, h
    )
    C, I, g = pj.value(pj.C), pj.value(pj.I), pj.value(pj.g)
    h_ = pj.value(pj.h)
    K = pj.value(pj.K)
    Kd = pj.value(pj.K_dot)
    F2 = float(pj.value(pj.F2))
    # when every exact term vanishes (e.g. constant curvature), residuals are
    # measured against the curvature scale rather than against round-off
    unit_K = np.abs(K).max() / math.sqrt(F2)
    unit_L = unit_K * np.abs(g).max()
    out: dict[str, IdentityResidual] = {}

    # (Moeq1): L_{ijk|m}y^m + C_ijm K^m_k = -1/3 g_im K^m_{k.j} - ...
    cK = np.einsum("ijm,mk->ijk", C, K)
    r1 = -np.einsum("im,mkj->ijk", g, Kd) / 3
    r2 = -np.einsum("jm,mki->ijk", g, Kd) / 3
    r3 = -np.einsum("im,mjk->ijk", g, Kd) / 6
    r4 = -np.einsum("jm,mik->ijk", g, Kd) / 6
    out["Moeq1"] = IdentityResidual(
        "Moeq1", float(np.abs(dL + cK - (r1 + r2 + r3 + r4)).max()),
        _scale(dL, cK, r1, r2, r3, r4, floor=unit_L), errL,
    )
    # (Moeq2): J_{k|m}y^m + I_m K^m_k = -1/3 {2 K^m_{k.m} + K^m_{m.k}}
    iK = I @ K
    s1 = -2 * np.einsum("mkm->k", Kd) / 3
    s2 = -np.einsum("mmk->k", Kd) / 3
    out["Moeq2"] = IdentityResidual(
        "Moeq2", float(np.abs(dJ + iK - s1 - s2).max()), _scale(dJ, iK, s1, s2, floor=unit_K), errJ
    )

    res = _scalar_residual(pj)
    if res > SCALAR_PRECONDITION * np.abs(K).max() + SCALAR_ATOL:
        reason = f"not of scalar curvature at this point (residual {res:.2e})"
        for name in ("MKdiff", "AZeq1", "AZeq2"):
            out[name] = IdentityResidual(name, float("nan"), float("nan"), skipped=reason)
        return out

    Kd_, first, second = _mkdiff_terms(pj)
    out["MKdiff"] = IdentityResidual(
        "MKdiff", float(np.abs(Kd_ - first - second).max()), _scale(Kd_, first, second, floor=unit_K)
    )
    Ks = pj.scalar_K
    Kv = float(pj.value(Ks))
    K_dot = np.array([pj.dy(Ks, l)[0] for l in range(n)])
    a1 = -F2 / 3 * np.einsum("i,jk->ijk", K_dot, h_)
    a2 = -F2 / 3 * np.einsum("j,ik->ijk", K_dot, h_)
    a3 = -F2 / 3 * np.einsum("k,ij->ijk", K_dot, h_)
    a4 = -F2 * Kv * C
    out["AZeq1"] = IdentityResidual(
        "AZeq1", float(np.abs(dL - (a1 + a2 + a3 + a4)).max()), _scale(dL, a1, a2, a3, a4, floor=unit_L), errL
    )
    b1 = -F2 / 3 * (n + 1) * K_dot
    b2 = -F2 * Kv * I
    out["AZeq2"] = IdentityResidual(
        "AZeq2", float(np.abs(dJ - b1 - b2).max()), _scale(dJ, b1, b2, floor=unit_K), errJ
    )
    return out


# ---------------------------------------------------------------------------
# Matsumoto profile along a geodesic

@dataclass
class ProfileReport:
    t: np.ndarray
    M: np.ndarray
    K: np.ndarray
    F: np.ndarray
    residual: np.ndarray
    margin: np.ndarray
    fd_error: float
    M0: float
    dM0: float
    a: float | None
    bound_ok: bool | None
    interval_end: float | None
    exit_time: float | None
    rtol: float = 1e-4
    margin_tol: float = 1e-6
    vacuous: bool = False
    notes: list[str] = field(default_factory=list)

    @property
    def max_M(self) -> float:
        return float(np.abs(self.M).max())

    @property
    def max_residual(self) -> float:
        r = self.residual[np.isfinite(self.residual)]
        return float(np.abs(r).max()) if r.size else 0.0

    @property
    def min_margin(self) -> float | None:
        mg = self.margin[np.isfinite(self.margin)]
        return float(mg.min()) if mg.size else None

    @property
    def ode_pass(self) -> bool:
        return self.vacuous or self.max_residual <= self.rtol * self.max_M

    @property
    def mvc_pass(self) -> bool | None:
        if self.a is None:
            return None
        if not self.bound_ok:
            return None
        mm = self.min_margin
        return True if mm is None else mm >= -self.margin_tol

    def verdict(self) -> dict:
        return {
            "max_abs_M": self.max_M,
            "max_residual": self.max_residual,
            "residual_tol": self.rtol * self.max_M,
            "fd_error": self.fd_error,
            "vacuous": self.vacuous,
            "ode_pass": self.ode_pass,
            "a": self.a,
            "curvature_bound_ok": self.bound_ok,
            "min_margin": self.min_margin,
            "margin_tol": self.margin_tol,
            "mvc_pass": self.mvc_pass,
            "interval_end": self.interval_end,
            "exit_time": self.exit_time,
            "notes": list(self.notes),
        }

    def with_bound(self, a: float) -> "ProfileReport":
        """Copy with the comparison margin against K <= -a^2 filled in."""
        if not a > 0:
            raise ValueError("curvature bound a must be positive")
        notes = list(self.notes)
        bound_ok = bool(self.K.max() <= -a * a + 1e-6)
        if not bound_ok:
            notes.append(f"observed K up to {self.K.max():.6g} violates K <= -a^2 = {-a * a:.6g}")
        tt = np.abs(self.t)
        comp = self.M0 * np.cosh(a * tt) + self.dM0 * np.sinh(a * tt) / a
        sign0 = np.sign(comp[0])
        k_end = 0
        while k_end < len(comp) and abs(comp[k_end]) > MVC_NONZERO and np.sign(comp[k_end]) == sign0:
            k_end += 1
        margin = np.full_like(self.M, np.nan)
        interval_end = None
        if k_end:
            margin[:k_end] = np.abs(self.M[:k_end]) - np.abs(comp[:k_end])
            interval_end = float(self.t[k_end - 1])
        return replace(self, a=float(a), bound_ok=bound_ok, margin=margin,
                       interval_end=interval_end, notes=notes)

    def to_csv(self, dest=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "M", "K", "residual", "margin"])
        for row in zip(self.t, self.M, self.K, self.residual, self.margin):
            w.writerow([repr(float(v)) for v in row])
        text = buf.getvalue()
        if dest is not None:
            Path(dest).write_text(text)
        return text


def _second_derivative(f: np.ndarray, h: float) -> np.ndarray:
    d = np.full_like(f, np.nan)
    d[2:-2] = (-f[:-4] + 16 * f[1:-3] - 30 * f[2:-2] + 16 * f[3:-1] - f[4:]) / (12 * h * h)
    return d


def _first_derivative_at_start(f: np.ndarray, h: float) -> float:
    return float((-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * h))


def matsumoto_profile(m: Metric, x, y, u, T: float, steps: int, a: float | None = None,
                      rtol: float = 1e-4, margin_tol: float = 1e-6) -> ProfileReport:
    """Sample M(t) = M_{sigma'(t)}(U, U, U) along the unit-speed geodesic.

    Reports the residual M'' + K F^2 M (5-point differences on the sample
    grid) and, when ``a`` is given, the margin |M(t)| - |M(0) cosh(at) +
    M'(0) sinh(at)/a| on the maximal interval from t = 0 on which the
    comparison function keeps one sign.
    """
    if steps < MIN_STEPS:
        raise AccuracyError(f"steps = {steps} too small for the profile grid", MIN_STEPS)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    u = np.asarray(u, dtype=float)
    pj0 = PointJets(m, x, y, ORDER_CURVATURE, horizontal=True)
    y = y / pj0.F[0]
    _require_scalar(PointJets(m, x, y, ORDER_CURVATURE, horizontal=True))

    t, xs, ys, U, exit_time = _flow(m, x, y, T, steps, u[None])
    if len(t) < 7:
        raise AccuracyError("geodesic left the domain before 7 samples", 2 * steps)
    U = U[:, 0]
    Ms, Ks, Fs = [], [], []
    for xk, yk, uk in zip(xs, ys, U):
        pj = PointJets(m, xk, yk, ORDER_CURVATURE, horizontal=True)
        Ms.append(np.einsum("ijk,i,j,k->", pj.value(pj.M), uk, uk, uk))
        Ks.append(float(pj.value(pj.scalar_K)))
        Fs.append(float(pj.F[0]))
    M, K, F = np.array(Ms), np.array(Ks), np.array(Fs)
    hstep = T / steps
    hh = abs(hstep)

    # d/dt along a negative-time grid: f(t_k) with t_k = k * hstep
    Mpp = _second_derivative(M, hh)
    residual = Mpp + K * F**2 * M
    d6 = np.abs(np.diff(M, 6)).max() if len(M) > 6 else 0.0
    fd_error = float(d6 / (90 * hh**2))

    g0 = pj0.value(pj0.g)
    u_size = float(np.sqrt(u @ g0 @ u)) ** 3
    vacuous = bool(np.abs(M).max() <= 1e-10 * max(u_size, 1e-300))
    notes = []
    if vacuous:
        notes.append("M vanishes along the path (ODE holds vacuously)")
    elif fd_error > FD_COARSE_FRACTION * np.abs(M).max():
        suggested = int(math.ceil(steps * (fd_error / (0.01 * np.abs(M).max())) ** 0.25))
        raise AccuracyError(f"finite-difference error estimate {fd_error:.2e} too large", suggested)

    M0 = float(M[0])
    dM0 = _first_derivative_at_start(M, hh) * np.sign(hstep)
    report = ProfileReport(
        t=t, M=M, K=K, F=F, residual=residual, margin=np.full_like(M, np.nan), fd_error=fd_error,
        M0=M0, dM0=float(dM0), a=None, bound_ok=None, interval_end=None,
        exit_time=exit_time, rtol=rtol, margin_tol=margin_tol, vacuous=vacuous, notes=notes,
    )
    return report if a is None else report.with_bound(a)
