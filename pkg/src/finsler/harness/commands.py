"""The eval / verify / profile / classify commands.

Every command is a plain function of a :class:`RunConfig`; the CLI layer only
handles argument parsing, serialization and exit codes.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..curvature import _curvature_value, _flag_from, _scalar_residual, identity_residuals, matsumoto_profile
from ..errors import AccuracyError, DimensionRefusalError, FinslerError, NotScalarCurvatureError
from ..geodesics import landsberg_transport, mean_landsberg_transport
from ..metrics import Metric
from ..tensors import ORDER_CURVATURE, ORDER_FULL, ORDER_VERTICAL, PointJets, cubic_form_sup, matsumoto_norm
from .config import RunConfig

# families whose Matsumoto torsion vanishes identically (Riemannian or Randers)
RANDERS_FAMILIES = {"euclidean", "riemannian", "klein", "hilbert_ball", "randers", "funk_ball"}
RIEMANNIAN_FAMILIES = {"euclidean", "riemannian", "klein", "hilbert_ball"}
PROFILE_T = 2.0
HOMOG_LAMBDA = 1.7

_EVAL_ERRORS = (FinslerError, ValueError, ArithmeticError, np.linalg.LinAlgError)


def expects_scalar_curvature(m: Metric) -> bool:
    """Whether the family is known to be of scalar flag curvature everywhere."""
    fam = m.family
    if fam in ("euclidean", "klein", "funk_ball", "hilbert_ball", "funk_convex",
               "minkowski_quartic_perturbed"):
        return True
    if fam == "randers":
        # beta = d(phi) + const is closed; projectively flat alpha gives scalar curvature
        return m.alpha.family in ("euclidean", "klein")
    return False


def _finite(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


@dataclass
class CheckRecord:
    check: str
    tag: str
    residual: float | None
    tol: float | None
    samples: int
    verdict: str  # pass | fail | skipped | info
    reason: str = ""

    @property
    def passed(self) -> bool | None:
        return {"pass": True, "fail": False}.get(self.verdict)

    def to_dict(self) -> dict:
        return {
            "check": self.check,
            "tag": self.tag,
            "residual": _finite(self.residual),
            "tol": self.tol,
            "pass": self.passed,
            "samples": self.samples,
            "verdict": self.verdict,
            "reason": self.reason,
        }


@dataclass
class VerificationReport:
    metric: dict
    seed: int
    records: list[CheckRecord] = field(default_factory=list)

    @property
    def overall_pass(self) -> bool:
        return all(r.verdict != "fail" for r in self.records)

    def add(self, rec: CheckRecord):
        self.records.append(rec)

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "seed": self.seed,
            "overall_pass": self.overall_pass,
            "checks": [r.to_dict() for r in self.records],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    def to_csv(self) -> str:
        cols = ["check", "tag", "residual", "tol", "pass", "samples", "verdict", "reason"]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in self.records:
            d = r.to_dict()
            w.writerow(["" if d[c] is None else (repr(d[c]) if isinstance(d[c], float) else d[c]) for c in cols])
        return buf.getvalue()


def _samples(m: Metric, rng: np.random.Generator, count: int):
    return [(m.sample_point(rng), m.sample_direction(rng)) for _ in range(count)]


def _run(name: str, tag: str, tol: float | None, fn: Callable[[], tuple], lower: bool = False) -> CheckRecord:
    """Run one check; ``fn`` returns (residual, samples[, verdict, reason]).

    Any evaluation error becomes a failed record.  With ``lower=True`` the
    residual must exceed ``tol`` instead of staying below it.
    """
    try:
        out = fn()
    except _EVAL_ERRORS as e:
        return CheckRecord(name, tag, None, tol, 0, "fail", f"{type(e).__name__}: {e}")
    res, n = out[0], out[1]
    if len(out) > 2:
        return CheckRecord(name, tag, res, tol, n, out[2], out[3] if len(out) > 3 else "")
    if res is None or not math.isfinite(res):
        return CheckRecord(name, tag, res, tol, n, "fail", "non-finite residual")
    ok = res > tol if lower else res <= tol
    return CheckRecord(name, tag, res, tol, n, "pass" if ok else "fail")


# ---------------------------------------------------------------------------
# verify

def _convexity(m, pts):
    worst = math.inf
    for x, y in pts:
        pj = PointJets(m, x, y, 2)
        ev = np.linalg.eigvalsh(pj.value(pj.g))
        worst = min(worst, ev[0] / ev[-1])
    return worst, len(pts)


def _rel(diff, ref, floor):
    return float(np.abs(diff).max() / max(np.abs(ref).max(), floor))


def homogeneity_residuals(m: Metric, x, y, lam: float = HOMOG_LAMBDA) -> dict[str, float]:
    """Relative residuals of the homogeneity and Euler identities at (x, y)."""
    a = PointJets(m, x, y, ORDER_FULL, horizontal=True)
    b = PointJets(m, x, lam * np.asarray(y, dtype=float), ORDER_FULL, horizontal=True)
    F = float(a.F[0])
    g, C, h, M, G, E = (a.value(t) for t in (a.g, a.C, a.h, a.M, a.G, a.E))
    yv = a.y
    gs = np.abs(g).max()
    Fy = np.array([a.dy(a.F, i)[0] for i in range(a.n)])
    return {
        "euler_F": abs(Fy @ yv - F) / F,
        "g_0_homogeneous": _rel(b.value(b.g) - g, g, 0.0),
        "C_-1_homogeneous": _rel(b.value(b.C) * lam - C, C, gs / F),
        "h_y": _rel(h @ yv, h, gs * F),
        "M_y": _rel(np.einsum("ijk,k->ij", M, yv), M, gs),
        "G_2_homogeneous": _rel(b.value(b.G) - lam**2 * G, G, F * F),
        "E_y": _rel(E @ yv, E, gs),
    }


def _homogeneity(m, pts):
    worst = 0.0
    for x, y in pts:
        worst = max(worst, max(homogeneity_residuals(m, x, y).values()))
    return worst, len(pts)


def _structure(m, pts):
    worst = 0.0
    for x, y in pts:
        cv = _curvature_value(PointJets(m, x, y, ORDER_CURVATURE, horizontal=True))
        worst = max(worst, cv.annihilation_residual(), cv.self_adjoint_residual())
    return worst, len(pts)


def _torsion_estimates(m, cfg, rng):
    pts = [m.sample_point(rng) for _ in range(cfg.samples["points"])]
    est = []
    for x in pts:
        mm, cc = matsumoto_norm(m, x, cfg.samples["directions"], rng, with_cartan=True)
        est.append((mm, cc, x))
    return est


def _scalar(m, pts, tol, expected):
    worst = 0.0
    for x, y in pts:
        pj = PointJets(m, x, y, ORDER_CURVATURE, horizontal=True)
        scale = np.abs(pj.value(pj.K)).max()
        r = _scalar_residual(pj)
        worst = max(worst, r / scale if scale > 0 else (0.0 if r == 0 else math.inf))
    if expected:
        return worst, len(pts)
    return worst, len(pts), "info", "family not expected to be of scalar curvature"


def _landsberg_dual(m, pts):
    worst = 0.0
    for x, y in pts:
        pj = PointJets(m, x, y, ORDER_FULL, horizontal=True)
        L = pj.value(pj.L)
        Lt, _ = landsberg_transport(m, x, y)
        worst = max(worst, float(np.abs(L - Lt).max() / max(1.0, np.abs(L).max())))
    return worst, len(pts)


def _mean_landsberg(m, pts):
    worst = 0.0
    for x, y in pts:
        pj = PointJets(m, x, y, ORDER_FULL, horizontal=True)
        J = pj.value(pj.J)
        J_trace = np.einsum("ij,ijk->k", pj.value(pj.ginv), pj.value(pj.L))
        Jt, _ = mean_landsberg_transport(m, x, y)
        scale = max(1.0, np.abs(J).max())
        worst = max(worst, float(np.abs(J - J_trace).max() / scale), float(np.abs(J - Jt).max() / scale))
    return worst, len(pts)


def cmd_verify(cfg: RunConfig) -> VerificationReport:
    m = cfg.build()
    tol = cfg.tolerances
    rng = np.random.default_rng(cfg.seed)
    rep = VerificationReport(cfg.metric.to_dict(), cfg.seed)
    pts = _samples(m, rng, cfg.samples["points"])
    ipts = _samples(m, rng, cfg.samples["identity_points"])

    rep.add(_run("convexity", "min eig(g)/max eig(g)", tol["convexity"], lambda: _convexity(m, pts), lower=True))
    rep.add(_run("homogeneity", "homogeneity/Euler", tol["homogeneity"], lambda: _homogeneity(m, pts)))

    # Matsumoto torsion: a check for known Randers families, evidence otherwise
    try:
        est = _torsion_estimates(m, cfg, rng)
        worst_m = max(e[0] for e in est)
        c_scale = max(e[1] for e in est)
        witness = max(est, key=lambda e: e[0])[2]
        rep.add(CheckRecord("matsumoto_norm", "||M|| estimate", worst_m, None, len(est), "info",
                            f"witness x = {[float(v) for v in witness]}; ||C|| estimate {c_scale:.3e}"))
        if m.family in RANDERS_FAMILIES:
            r = worst_m / (1.0 + c_scale)
            rep.add(CheckRecord("randers_M", "M = 0", r, tol["randers_M"], len(est),
                                "pass" if r <= tol["randers_M"] else "fail"))
    except _EVAL_ERRORS as e:
        rep.add(CheckRecord("matsumoto_norm", "||M|| estimate", None, None, 0, "fail",
                            f"{type(e).__name__}: {e}"))

    rep.add(_run("curvature_structure", "K(y) = 0, g-self-adjoint", tol["curvature_structure"],
                 lambda: _structure(m, pts)))
    expected = expects_scalar_curvature(m)
    rep.add(_run("scalar_curvature", "Kikiso1", tol["scalar_curvature"],
                 lambda: _scalar(m, pts, tol["scalar_curvature"], expected)))

    # identity chain
    id_tol = tol["identities_riemannian"] if m.family in RIEMANNIAN_FAMILIES else tol["identities"]
    worst: dict[str, float] = {}
    skipped: dict[str, str] = {}
    counts: dict[str, int] = {}
    failure = None
    try:
        for x, y in ipts:
            for name, r in identity_residuals(m, x, y).items():
                if r.skipped:
                    skipped.setdefault(name, r.skipped)
                    continue
                counts[name] = counts.get(name, 0) + 1
                worst[name] = max(worst.get(name, 0.0), r.relative)
    except _EVAL_ERRORS as e:
        failure = f"{type(e).__name__}: {e}"
    for name in ("MKdiff", "AZeq1", "AZeq2", "Moeq1", "Moeq2"):
        if failure is not None:
            rep.add(CheckRecord(name, name, None, id_tol, 0, "fail", failure))
        elif name in worst:
            ok = worst[name] <= id_tol
            rep.add(CheckRecord(name, name, worst[name], id_tol, counts[name], "pass" if ok else "fail",
                                skipped.get(name, "")))
        else:
            rep.add(CheckRecord(name, name, None, id_tol, 0, "skipped", skipped.get(name, "no samples")))

    rep.add(_run("landsberg_dual", "closed form vs transport", tol["landsberg"], lambda: _landsberg_dual(m, ipts)))
    rep.add(_run("mean_landsberg", "LJE", tol["landsberg"], lambda: _mean_landsberg(m, ipts)))

    for rec in _profile_checks(m, cfg, rng):
        rep.add(rec)
    return rep


def _profile_checks(m: Metric, cfg: RunConfig, rng) -> list[CheckRecord]:
    tol = cfg.tolerances
    steps = cfg.samples["profile_steps"]
    ode_worst, mvc_worst = 0.0, math.inf
    n_ode = n_mvc = 0
    ode_fail = mvc_fail = None
    ode_skip = mvc_skip = None
    for _ in range(cfg.samples["profiles"]):
        x, y, u = m.sample_point(rng), m.sample_direction(rng), rng.standard_normal(m.n)
        try:
            rep = matsumoto_profile(m, x, y, u, PROFILE_T, steps, rtol=tol["profile_ode"],
                                    margin_tol=tol["profile_margin"])
        except NotScalarCurvatureError as e:
            ode_skip = mvc_skip = str(e)
            continue
        except AccuracyError as e:
            ode_fail = f"{e} (suggested steps {e.suggested_steps})"
            continue
        except _EVAL_ERRORS as e:
            ode_fail = f"{type(e).__name__}: {e}"
            continue
        n_ode += 1
        ode_worst = max(ode_worst, 0.0 if rep.vacuous else rep.max_residual / rep.max_M)
        if rep.vacuous:
            n_mvc += 1
            mvc_worst = min(mvc_worst, 0.0)
            continue
        kmax = float(rep.K.max())
        if kmax >= 0:
            mvc_skip = f"observed K up to {kmax:.3g}: no negative upper bound"
            continue
        rb = rep.with_bound(math.sqrt(-kmax))
        n_mvc += 1
        if rb.min_margin is not None:
            mvc_worst = min(mvc_worst, rb.min_margin)
    out = []
    if ode_fail:
        out.append(CheckRecord("profile_ode", "Sijk", ode_worst, tol["profile_ode"], n_ode, "fail", ode_fail))
    elif n_ode:
        ok = ode_worst <= tol["profile_ode"]
        out.append(CheckRecord("profile_ode", "Sijk", ode_worst, tol["profile_ode"], n_ode, "pass" if ok else "fail"))
    else:
        out.append(CheckRecord("profile_ode", "Sijk", None, tol["profile_ode"], 0, "skipped", ode_skip or ""))
    if n_mvc:
        if not math.isfinite(mvc_worst):
            mvc_worst = 0.0
        ok = mvc_worst >= -tol["profile_margin"]
        out.append(CheckRecord("profile_margin", "Mvc", mvc_worst, tol["profile_margin"], n_mvc,
                               "pass" if ok else "fail", "residual is the minimum margin"))
    else:
        out.append(CheckRecord("profile_margin", "Mvc", None, tol["profile_margin"], 0, "skipped",
                               mvc_skip or ode_fail or ""))
    return out


# ---------------------------------------------------------------------------
# eval

class EvaluationError(FinslerError):
    def __init__(self, quantity: str, cause: Exception):
        super().__init__(f"error computing {quantity}: {type(cause).__name__}: {cause}")
        self.quantity = quantity


def _flatten(name: str, a, out: dict):
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        out[name] = float(a)
        return
    for idx in np.ndindex(a.shape):
        out[f"{name}[{','.join(map(str, idx))}]"] = float(a[idx])


def _default_vectors(n: int):
    e = np.eye(n)
    return np.zeros(n), e[0], e[1]


def cmd_eval(cfg: RunConfig, x=None, y=None) -> dict[str, float]:
    """Flat table of every pointwise quantity at (x, y)."""
    m = cfg.build()
    x0, y0, _ = _default_vectors(m.n)
    x = np.asarray(x if x is not None else cfg.eval.get("x", x0), dtype=float)
    y = np.asarray(y if y is not None else cfg.eval.get("y", y0), dtype=float)
    m.check(x, y)
    pj = PointJets(m, x, y, ORDER_FULL, horizontal=True)
    out: dict[str, float] = {}
    for name, attr in (("F", None), ("g", "g"), ("C", "C"), ("I", "I"), ("h", "h"), ("M", "M"),
                       ("G", "G"), ("N", "N"), ("E", "E"), ("L", "L"), ("J", "J"), ("K", "K"),
                       ("K_scalar", "scalar_K")):
        try:
            val = pj.F[0] if attr is None else pj.value(getattr(pj, attr))
        except _EVAL_ERRORS as e:
            raise EvaluationError(name, e) from e
        _flatten(name, val, out)
    rng = np.random.default_rng(cfg.seed)
    try:
        cv = _curvature_value(pj)
        for k in range(cfg.samples["flags"]):
            out[f"flag[{k}]"] = _flag_from(cv, rng.standard_normal(m.n))
    except _EVAL_ERRORS as e:
        raise EvaluationError("flag curvature", e) from e
    return out


# ---------------------------------------------------------------------------
# profile

def cmd_profile(cfg: RunConfig, x=None, y=None, u=None, T=None, steps=None, a=None):
    m = cfg.build()
    p = cfg.profile
    x0, y0, u0 = _default_vectors(m.n)
    x = np.asarray(x if x is not None else p.get("x", x0), dtype=float)
    y = np.asarray(y if y is not None else p.get("y", y0), dtype=float)
    u = np.asarray(u if u is not None else p.get("u", u0), dtype=float)
    T = float(T if T is not None else p.get("T", PROFILE_T))
    steps = int(steps if steps is not None else p.get("steps", cfg.samples["profile_steps"]))
    a = a if a is not None else p.get("a")
    m.check(x, y)
    return matsumoto_profile(m, x, y, u, T, steps, a=a, rtol=cfg.tolerances["profile_ode"],
                             margin_tol=cfg.tolerances["profile_margin"])


# ---------------------------------------------------------------------------
# classify

def cmd_classify(cfg: RunConfig, n_points: int | None = None, n_dirs: int | None = None) -> dict:
    """One-sided Randers test: vanishing M at every sample is necessary, not sufficient."""
    m = cfg.build()
    if m.n < 3:
        raise DimensionRefusalError("classification needs n >= 3: in dimension 2 M vanishes for every metric")
    n_points = n_points or cfg.classify.get("n_points", cfg.samples["points"])
    n_dirs = n_dirs or cfg.classify.get("n_dirs", cfg.samples["directions"])
    rng = np.random.default_rng(cfg.seed)
    best = (0.0, None, None)
    c_scale = 0.0
    for _ in range(n_points):
        x = m.sample_point(rng)
        for _ in range(n_dirs):
            y = m.sample_direction(rng)
            pj = PointJets(m, x, y, ORDER_VERTICAL)
            g = pj.value(pj.g)
            F = float(pj.F[0])
            mm = F * cubic_form_sup(pj.value(pj.M), g, rng)
            c_scale = max(c_scale, F * cubic_form_sup(pj.value(pj.C), g, rng))
            if mm > best[0] or best[1] is None:
                best = (mm, x, y)
    thresh = cfg.tolerances["classify"] * (1.0 + c_scale)
    verdict = "randers-compatible" if best[0] <= thresh else "not-randers"
    return {
        "verdict": verdict,
        "max_M": best[0],
        "threshold": thresh,
        "cartan_scale": c_scale,
        "witness_x": [float(v) for v in best[1]],
        "witness_y": [float(v) for v in best[2]],
        "points": n_points,
        "directions": n_dirs,
    }
