"""Truncated multivariate Taylor jets.

A jet in ``nvars`` variables truncated at ``order`` stores the Taylor
coefficients of every monomial of total degree <= order in a dense array,
graded by degree and lexicographic inside each degree.  Because the basis is
graded, the coefficient list of a lower-order truncation is a prefix of the
higher-order one, so truncation is a slice.

Two layers are exposed:

* array functions (:func:`mul`, :func:`deriv`, :func:`reciprocal`, ...)
  acting on coefficient arrays whose *last* axis is the coefficient axis and
  whose leading axes broadcast like numpy.  The tensor code uses these to
  contract whole jet-valued matrices in one call.
* :class:`Jet`, a scalar wrapper with operator overloading, used to write
  metric functions that accept either floats or jets.

Binary operations on jets of different orders truncate to the smaller order.
"""
from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache
from itertools import combinations_with_replacement
from numbers import Real
from typing import Callable, Sequence

import numpy as np

from .errors import (
    DegenerateImplicitError,
    InvalidOrderError,
    JetDomainError,
    OrderExceededError,
    RootFailureError,
    SingularJetError,
)

MAX_ORDER = 5

NEWTON_TOL = 1e-14
NEWTON_MAX_ITER = 50
IMPLICIT_DERIV_MIN = 1e-8


class _Tables:
    """Index bookkeeping for one (nvars, order) pair."""

    def __init__(self, nvars: int, order: int):
        self.nvars = nvars
        self.order = order
        idx = []
        for d in range(order + 1):
            for combo in combinations_with_replacement(range(nvars), d):
                alpha = [0] * nvars
                for v in combo:
                    alpha[v] += 1
                idx.append(tuple(alpha))
        self.index = idx
        self.pos = {a: k for k, a in enumerate(idx)}
        self.size = len(idx)
        self.degree = np.array([sum(a) for a in idx])
        self.factorial = np.array(
            [math.prod(math.factorial(e) for e in a) for a in idx], dtype=float
        )

        ia, ib, ic = [], [], []
        for i, a in enumerate(idx):
            for j, b in enumerate(idx):
                if self.degree[i] + self.degree[j] <= order:
                    ia.append(i)
                    ib.append(j)
                    ic.append(self.pos[tuple(p + q for p, q in zip(a, b))])
        perm = np.argsort(ic, kind="stable")
        self.mul_a = np.array(ia)[perm]
        self.mul_b = np.array(ib)[perm]
        ic = np.array(ic)[perm]
        self.mul_starts = np.flatnonzero(np.r_[True, ic[1:] != ic[:-1]])

        # derivative w.r.t. variable v maps order -> order - 1
        self.deriv_src = []
        self.deriv_fac = []
        if order >= 1:
            lower = tables(nvars, order - 1).index
            for v in range(nvars):
                src, fac = [], []
                for a in lower:
                    b = list(a)
                    b[v] += 1
                    src.append(self.pos[tuple(b)])
                    fac.append(a[v] + 1.0)
                self.deriv_src.append(np.array(src))
                self.deriv_fac.append(np.array(fac))


@lru_cache(maxsize=None)
def tables(nvars: int, order: int) -> _Tables:
    if order < 0:
        raise OrderExceededError(f"negative truncation order {order}")
    return _Tables(nvars, order)


def n_coeffs(nvars: int, order: int) -> int:
    return math.comb(nvars + order, order)


@lru_cache(maxsize=None)
def _size_to_order(nvars: int) -> dict:
    return {n_coeffs(nvars, k): k for k in range(MAX_ORDER + 2)}


def order_of(a: np.ndarray, nvars: int) -> int:
    try:
        return _size_to_order(nvars)[a.shape[-1]]
    except KeyError:
        raise ValueError(
            f"array with {a.shape[-1]} coefficients is not a jet in {nvars} variables"
        ) from None


# ---------------------------------------------------------------------------
# array layer

def truncate(a: np.ndarray, order: int, nvars: int) -> np.ndarray:
    if order > order_of(a, nvars):
        raise OrderExceededError("cannot raise the truncation order of a jet")
    return a[..., : n_coeffs(nvars, order)]


def mul(a, b, nvars: int) -> np.ndarray:
    """Truncated product, broadcasting over leading axes."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    order = min(order_of(a, nvars), order_of(b, nvars))
    t = tables(nvars, order)
    a = a[..., : t.size]
    b = b[..., : t.size]
    prod = a[..., t.mul_a] * b[..., t.mul_b]
    return np.add.reduceat(prod, t.mul_starts, axis=-1)


def common(*arrays) -> list[np.ndarray]:
    """Truncate jet arrays to their smallest common order (a prefix slice)."""
    k = min(np.shape(a)[-1] for a in arrays)
    return [np.asarray(a)[..., :k] for a in arrays]


def add(*arrays) -> np.ndarray:
    out = common(*arrays)
    return sum(out[1:], out[0])


def sub(a, b) -> np.ndarray:
    a, b = common(a, b)
    return a - b


def scale(a, s) -> np.ndarray:
    """Multiply a jet array by a float array broadcasting over leading axes."""
    return np.asarray(a) * np.asarray(s, dtype=float)[..., None]


def deriv(a: np.ndarray, var: int, nvars: int) -> np.ndarray:
    """Partial derivative in one variable; the result has order - 1."""
    t = tables(nvars, order_of(a, nvars))
    if t.order == 0:
        raise OrderExceededError("derivative of an order-0 jet")
    return a[..., t.deriv_src[var]] * t.deriv_fac[var]


def compose(a: np.ndarray, series: Sequence, nvars: int) -> np.ndarray:
    """Evaluate sum_k series[k] * (a - a0)^k by Horner's rule.

    ``series[k]`` holds f^(k)(a0)/k! and may be an array broadcasting
    against the leading axes of ``a``.
    """
    order = order_of(a, nvars)
    nil = np.array(a, dtype=float, copy=True)
    nil[..., 0] = 0.0
    out = np.zeros_like(nil)
    out[..., 0] = series[order]
    for k in range(order - 1, -1, -1):
        out = mul(out, nil, nvars)
        out[..., 0] += series[k]
    return out


def reciprocal(a: np.ndarray, nvars: int) -> np.ndarray:
    a0 = np.asarray(a)[..., 0]
    if np.any(a0 == 0.0):
        raise SingularJetError("division by a jet with zero constant term")
    order = order_of(a, nvars)
    inv = 1.0 / a0
    series = [(-1) ** k * inv ** (k + 1) for k in range(order + 1)]
    return compose(a, series, nvars)


def power(a: np.ndarray, r: float, nvars: int) -> np.ndarray:
    """a**r for non-integer r via the binomial series (needs a0 > 0)."""
    a0 = np.asarray(a)[..., 0]
    if np.any(a0 <= 0.0):
        raise JetDomainError(f"non-integer power {r} of a jet with nonpositive constant term")
    order = order_of(a, nvars)
    series = []
    coef = 1.0
    for k in range(order + 1):
        series.append(coef * a0 ** (r - k))
        coef *= (r - k) / (k + 1)
    return compose(a, series, nvars)


def sqrt_array(a: np.ndarray, nvars: int) -> np.ndarray:
    return power(a, 0.5, nvars)


def constant(value, nvars: int, order: int) -> np.ndarray:
    value = np.asarray(value, dtype=float)
    out = np.zeros(value.shape + (n_coeffs(nvars, order),))
    out[..., 0] = value
    return out


def variables(values, nvars: int, order: int, offset: int = 0) -> np.ndarray:
    """Stack of seeded variable jets ``offset .. offset+len(values)-1``."""
    values = np.asarray(values, dtype=float)
    out = constant(values, nvars, order)
    if order >= 1:
        for k in range(len(values)):
            out[k, 1 + offset + k] = 1.0
    return out


# ---------------------------------------------------------------------------
# scalar wrapper

class Jet:
    """Scalar truncated Taylor jet.

    >>> x, = lift([2.0], 2)
    >>> (x * x).partial((2,))
    2.0
    """

    __slots__ = ("coeffs", "nvars")
    __array_ufunc__ = None  # make numpy scalars defer to our reflected ops

    def __init__(self, coeffs, nvars: int):
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.nvars = nvars
        order_of(self.coeffs, nvars)

    @property
    def order(self) -> int:
        return order_of(self.coeffs, self.nvars)

    @property
    def value(self) -> float:
        return float(self.coeffs[0])

    @classmethod
    def constant(cls, value: float, nvars: int, order: int) -> "Jet":
        return cls(constant(value, nvars, order), nvars)

    def coeff_dict(self) -> dict:
        t = tables(self.nvars, self.order)
        return {a: float(c) for a, c in zip(t.index, self.coeffs)}

    def partial(self, idx: Sequence[int]) -> float:
        """Partial derivative for the exponent multi-index ``idx``."""
        idx = tuple(int(e) for e in idx)
        if len(idx) != self.nvars:
            raise ValueError(f"multi-index needs {self.nvars} entries")
        if sum(idx) > self.order:
            raise OrderExceededError(
                f"derivative of total degree {sum(idx)} from a jet of order {self.order}"
            )
        t = tables(self.nvars, self.order)
        k = t.pos[idx]
        return float(self.coeffs[k] * t.factorial[k])

    def deriv(self, var: int) -> "Jet":
        return Jet(deriv(self.coeffs, var, self.nvars), self.nvars)

    def truncate(self, order: int) -> "Jet":
        return Jet(truncate(self.coeffs, order, self.nvars), self.nvars)

    def _coerce(self, other):
        if isinstance(other, Jet):
            if other.nvars != self.nvars:
                raise ValueError("jets over different variable sets")
            return other
        if isinstance(other, Real):
            return None
        return NotImplemented

    def __add__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        if o is None:
            c = self.coeffs.copy()
            c[0] += other
            return Jet(c, self.nvars)
        k = min(self.coeffs.size, o.coeffs.size)
        return Jet(self.coeffs[:k] + o.coeffs[:k], self.nvars)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.coeffs, self.nvars)

    def __pos__(self):
        return self

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        if o is None:
            return Jet(self.coeffs * other, self.nvars)
        return Jet(mul(self.coeffs, o.coeffs, self.nvars), self.nvars)

    __rmul__ = __mul__

    def reciprocal(self) -> "Jet":
        return Jet(reciprocal(self.coeffs, self.nvars), self.nvars)

    def __truediv__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        if o is None:
            if other == 0:
                raise SingularJetError("division of a jet by zero")
            return Jet(self.coeffs / other, self.nvars)
        return self * o.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def sqrt(self) -> "Jet":
        if self.coeffs[0] <= 0.0:
            raise JetDomainError("sqrt of a jet with nonpositive constant term")
        return Jet(sqrt_array(self.coeffs, self.nvars), self.nvars)

    def __pow__(self, r):
        if isinstance(r, int) or (isinstance(r, Fraction) and r.denominator == 1):
            r = int(r)
            if r < 0:
                return (self ** (-r)).reciprocal()
            out, base = Jet.constant(1.0, self.nvars, self.order), self
            while r:
                if r & 1:
                    out = out * base
                r >>= 1
                if r:
                    base = base * base
            return out
        if isinstance(r, (Fraction, float)):
            return Jet(power(self.coeffs, float(r), self.nvars), self.nvars)
        return NotImplemented

    def __repr__(self):
        return f"Jet(value={self.value!r}, nvars={self.nvars}, order={self.order})"


def lift(values: Sequence[float], order: int) -> list[Jet]:
    """One seeded jet per variable, all over the same variable set."""
    if not isinstance(order, int) or not 1 <= order <= MAX_ORDER:
        raise InvalidOrderError(f"jet order must be in 1..{MAX_ORDER}, got {order!r}")
    values = [float(v) for v in values]
    if not all(math.isfinite(v) for v in values):
        raise ValueError("lift values must be finite")
    n = len(values)
    arr = variables(values, n, order)
    return [Jet(row, n) for row in arr]


def partial(j: Jet, idx: Sequence[int]) -> float:
    return j.partial(idx)


# ---------------------------------------------------------------------------
# polymorphic helpers for metric code

def sqrt(v):
    if isinstance(v, Jet):
        return v.sqrt()
    if v <= 0.0:
        raise JetDomainError(f"sqrt of nonpositive value {v!r}")
    return math.sqrt(v)


def value_of(v) -> float:
    return v.value if isinstance(v, Jet) else float(v)


def implicit_solve(residual: Callable, seed: float, params: Sequence = ()):
    """Solve ``residual(u, *params) = 0`` for ``u`` at jet level.

    The constant term comes from scalar Newton iteration on the constant
    parts of ``params``; each further sweep ``u <- u - R(u)/R_u(u0)`` fixes
    one more order of Taylor coefficients.  Returns a float when no
    parameter is a jet.
    """
    jets = [p for p in params if isinstance(p, Jet)]
    p0 = [value_of(p) for p in params]

    u = float(seed)
    for _ in range(NEWTON_MAX_ITER):
        r = residual(Jet(np.array([u, 1.0]), 1), *p0)
        r = r if isinstance(r, Jet) else Jet.constant(r, 1, 1)
        val, du = r.coeffs[0], r.coeffs[1]
        if abs(du) < IMPLICIT_DERIV_MIN:
            raise DegenerateImplicitError(
                f"|dR/du| = {abs(du):.3e} below {IMPLICIT_DERIV_MIN} at u = {u!r}"
            )
        step = val / du
        u -= step
        if not math.isfinite(u):
            break
        if abs(val) <= NEWTON_TOL:
            break
        # roundoff floor of residuals with large magnitude
        if abs(step) <= 4e-16 * max(1.0, abs(u)) and abs(val) <= 1e3 * NEWTON_TOL:
            break
    else:
        raise RootFailureError(f"Newton did not converge in {NEWTON_MAX_ITER} iterations")
    if not math.isfinite(u):
        raise RootFailureError("Newton iteration diverged")

    if not jets:
        return u
    nvars = jets[0].nvars
    order = min(j.order for j in jets)
    uj = Jet.constant(u, nvars, order)
    for _ in range(order):
        uj = uj - residual(uj, *params) / du
    return uj
