"""Forward-mode dual numbers and Lie derivatives of vector fields.

Vector fields are callables that take a numpy array whose trailing axis is
the state axis and return an array of the same layout.  Writing fields that
way lets one implementation serve three callers: scalar evaluation, batched
evaluation over many states at once, and derivative evaluation, where the
array holds :class:`Dual` objects instead of floats.

Derivatives up to third order are obtained by nesting first-order duals
(one nesting level per differentiation).  This is exact to machine
precision and needs no step-size tuning.  For black-box fields that cannot
digest dual numbers there is a central finite-difference fallback with the
standard cube-root-of-epsilon step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "DimensionMismatch",
    "NonFiniteValue",
    "Dual",
    "real_part",
    "dual_part",
    "exp",
    "log",
    "sqrt",
    "VectorFunction",
    "constant_field",
    "directional_derivative",
    "second_directional_derivative",
    "jacobian",
    "lie_derivative",
    "lie_derivative2",
]


class DimensionMismatch(ValueError):
    """A field was evaluated with the wrong number of coordinates."""


class NonFiniteValue(ArithmeticError):
    """An evaluation produced NaN or infinity.

    ``coordinate`` is the index of the offending component and ``point``
    the state at which the evaluation was attempted (when known).
    """

    def __init__(self, message: str, coordinate: int | None = None, point=None):
        super().__init__(message)
        self.coordinate = coordinate
        self.point = point


def _unwrap(v):
    # numpy ufuncs on 0-d object arrays can hand back 0-d wrappers
    if isinstance(v, np.ndarray) and v.ndim == 0:
        return v.item()
    return v


def _defer_to_numpy(v) -> bool:
    # arrays must stay arrays-of-Duals; let numpy broadcast elementwise
    return isinstance(v, np.ndarray)


def _deep_real(v):
    v = _unwrap(v)
    while isinstance(v, Dual):
        v = _unwrap(v.re)
    return v


class Dual:
    """First-order dual number ``re + du*eps`` with ``eps**2 == 0``.

    Both components may themselves be ``Dual``, which is how higher
    derivatives are formed.  Comparisons act on the underlying real value
    so that branching code (clamps, domain guards) works unchanged.
    ``float(dual)`` is deliberately not defined: silently dropping the
    derivative part is the classic forward-mode bug.
    """

    __slots__ = ("re", "du")

    def __init__(self, re, du=0.0):
        self.re = re
        self.du = du

    def __repr__(self):
        return f"Dual({self.re!r}, {self.du!r})"

    def __add__(self, o):
        o = _unwrap(o)
        if _defer_to_numpy(o):
            return NotImplemented
        if isinstance(o, Dual):
            return Dual(self.re + o.re, self.du + o.du)
        return Dual(self.re + o, self.du)

    __radd__ = __add__

    def __sub__(self, o):
        o = _unwrap(o)
        if _defer_to_numpy(o):
            return NotImplemented
        if isinstance(o, Dual):
            return Dual(self.re - o.re, self.du - o.du)
        return Dual(self.re - o, self.du)

    def __rsub__(self, o):
        o = _unwrap(o)
        if _defer_to_numpy(o):
            return NotImplemented
        return Dual(o - self.re, -self.du)

    def __neg__(self):
        return Dual(-self.re, -self.du)

    def __pos__(self):
        return self

    def __mul__(self, o):
        o = _unwrap(o)
        if _defer_to_numpy(o):
            return NotImplemented
        if isinstance(o, Dual):
            return Dual(self.re * o.re, self.re * o.du + self.du * o.re)
        return Dual(self.re * o, self.du * o)

    __rmul__ = __mul__

    def _reciprocal(self):
        inv = 1.0 / self.re
        return Dual(inv, -(self.du * inv) * inv)

    def __truediv__(self, o):
        o = _unwrap(o)
        if _defer_to_numpy(o):
            return NotImplemented
        if isinstance(o, Dual):
            return self * o._reciprocal()
        return Dual(self.re / o, self.du / o)

    def __rtruediv__(self, o):
        o = _unwrap(o)
        if _defer_to_numpy(o):
            return NotImplemented
        return self._reciprocal() * o

    def __pow__(self, p):
        p = _unwrap(p)
        if isinstance(p, Dual):
            return (self.log() * p).exp()
        if isinstance(p, int) and not isinstance(p, bool):
            if p == 0:
                # keep the nesting structure of a "one" at this level
                return Dual(self.re * 0.0 + 1.0, self.du * 0.0)
            if p < 0:
                return self._reciprocal() ** (-p)
            result = None
            base = self
            k = p
            while True:
                if k & 1:
                    result = base if result is None else result * base
                k >>= 1
                if not k:
                    return result
                base = base * base
        # real exponent: d(x^p) = p x^(p-1) dx
        return Dual(self.re**p, (self.re ** (p - 1)) * (p * self.du))

    def exp(self):
        e = exp(self.re)
        return Dual(e, self.du * e)

    def log(self):
        return Dual(log(self.re), self.du / self.re)

    def sqrt(self):
        r = sqrt(self.re)
        return Dual(r, self.du / (r * 2.0))

    def __abs__(self):
        return -self if _deep_real(self) < 0.0 else self

    def __lt__(self, o):
        return _deep_real(self) < _deep_real(o)

    def __le__(self, o):
        return _deep_real(self) <= _deep_real(o)

    def __gt__(self, o):
        return _deep_real(self) > _deep_real(o)

    def __ge__(self, o):
        return _deep_real(self) >= _deep_real(o)

    def __eq__(self, o):
        o = _unwrap(o)
        if isinstance(o, Dual):
            return self.re == o.re and self.du == o.du
        return _deep_real(self) == o

    def __ne__(self, o):
        return not self.__eq__(o)


def real_part(v):
    """Value component of ``v``; plain numbers pass through."""
    v = _unwrap(v)
    return v.re if isinstance(v, Dual) else v


def dual_part(v):
    """Derivative component of ``v``; plain numbers differentiate to 0."""
    v = _unwrap(v)
    return v.du if isinstance(v, Dual) else 0.0


def exp(v):
    """Exponential accepting floats, arrays (object arrays included), and duals."""
    v = _unwrap(v)
    if isinstance(v, Dual):
        return v.exp()
    if isinstance(v, np.ndarray):
        return np.exp(v)
    return math.exp(v)


def log(v):
    v = _unwrap(v)
    if isinstance(v, Dual):
        return v.log()
    if isinstance(v, np.ndarray):
        return np.log(v)
    return math.log(v)


def sqrt(v):
    v = _unwrap(v)
    if isinstance(v, Dual):
        return v.sqrt()
    if isinstance(v, np.ndarray):
        return np.sqrt(v)
    return math.sqrt(v)


@dataclass(frozen=True)
class VectorFunction:
    """A map R^dim_in -> R^dim_out with a derivative oracle.

    ``func`` must follow the trailing-state-axis convention of this module.
    With ``exact=True`` (default) derivatives are taken by dual numbers and
    are exact to machine precision; ``exact=False`` marks a black box and
    routes Jacobians through central finite differences.  ``constant``
    holds the output vector when the field does not depend on the state,
    which lets downstream code skip differentiating it.
    """

    dim_in: int
    dim_out: int
    func: Callable[[np.ndarray], np.ndarray]
    exact: bool = True
    constant: tuple[float, ...] | None = None
    name: str = ""

    def __call__(self, x):
        return self.func(x)


def constant_field(values: Sequence[float], dim_in: int | None = None) -> VectorFunction:
    """Field that returns ``values`` for every state (dual-safe)."""
    arr = np.asarray(values, dtype=float)
    m = arr.size
    n = m if dim_in is None else dim_in

    def func(x):
        # multiplying by 0 keeps dual/batch structure of the input
        return x[..., :1] * 0.0 + arr

    return VectorFunction(n, m, func, exact=True, constant=tuple(arr.tolist()))


_FD_STEP = float(np.cbrt(np.finfo(float).eps))


def _as_point(x, n: int, where: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.shape != (n,):
        raise DimensionMismatch(f"{where}: expected a point of shape ({n},), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr))[0])
        raise NonFiniteValue(f"{where}: coordinate {bad} of the point is not finite", coordinate=bad, point=arr)
    return arr


def _check_finite_output(values: np.ndarray, point, where: str) -> np.ndarray:
    flat = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(flat)):
        bad = int(np.flatnonzero(~np.isfinite(flat.ravel()))[0])
        raise NonFiniteValue(f"{where}: output coordinate {bad} is not finite", coordinate=bad, point=point)
    return flat


def _coerce_scalar(v):
    # keep numpy scalars out of dual arithmetic: their binary ops with
    # unknown objects may produce 0-d object arrays instead of deferring
    v = _unwrap(v)
    return v if isinstance(v, Dual) else float(v)


def _seed(x, v) -> np.ndarray:
    out = np.empty(len(x), dtype=object)
    for i in range(len(x)):
        out[i] = Dual(_coerce_scalar(x[i]), _coerce_scalar(v[i]))
    return out


def directional_derivative(func: Callable, x, v):
    """d/ds func(x + s v) at s=0, via one dual-seeded evaluation.

    ``x`` and ``v`` may hold floats or (nested) duals; the result array is
    float when both are plain.
    """
    out = func(_seed(x, v))
    out = np.asarray(out, dtype=object).ravel()
    return np.array([dual_part(o) for o in out])


def second_directional_derivative(func: Callable, x, v):
    """d^2/ds^2 func(x + s v) at s=0 (the Hessian quadratic form H[v, v])."""

    def first(y):
        return directional_derivative(func, y, v)

    return directional_derivative(first, x, v)


def _fd_jacobian(func: Callable, x: np.ndarray, dim_out: int) -> np.ndarray:
    n = x.size
    jac = np.empty((dim_out, n))
    for k in range(n):
        h = _FD_STEP * max(1.0, abs(float(x[k])))
        xp = x.copy()
        xp[k] += h
        xm = x.copy()
        xm[k] -= h
        jac[:, k] = (np.asarray(func(xp), dtype=float) - np.asarray(func(xm), dtype=float)) / (2.0 * h)
    return jac


def _use_exact(method: str, *fields: VectorFunction) -> bool:
    if method == "dual":
        return True
    if method == "fd":
        return False
    if method != "auto":
        raise ValueError(f"unknown derivative method {method!r}")
    return all(f.exact for f in fields)


def jacobian(f: VectorFunction, x, method: str = "auto") -> np.ndarray:
    """Jacobian matrix df/dx at ``x`` (shape ``(dim_out, dim_in)``)."""
    x = _as_point(x, f.dim_in, "jacobian")
    if f.constant is not None:
        return np.zeros((f.dim_out, f.dim_in))
    if _use_exact(method, f):
        cols = []
        for k in range(f.dim_in):
            e = np.zeros(f.dim_in)
            e[k] = 1.0
            cols.append(directional_derivative(f.func, x, e))
        jac = np.column_stack(cols).astype(float)
    else:
        jac = _fd_jacobian(f.func, x, f.dim_out)
    return _check_finite_output(jac, x, "jacobian")


def lie_derivative(f: VectorFunction, h: VectorFunction, x, method: str = "auto") -> np.ndarray:
    """L_f h (x) = (dh/dx)(x) f(x), the derivative of field h along field f."""
    if f.dim_in != h.dim_in or f.dim_out != h.dim_in:
        raise DimensionMismatch(
            f"lie_derivative: direction field maps to R^{f.dim_out}, "
            f"differentiated field expects R^{h.dim_in}"
        )
    x = _as_point(x, h.dim_in, "lie_derivative")
    if h.constant is not None:
        return np.zeros(h.dim_out)
    fx = f.func(x)
    if _use_exact(method, f, h):
        out = directional_derivative(h.func, x, fx)
    else:
        out = _fd_jacobian(h.func, x, h.dim_out) @ np.asarray(fx, dtype=float)
    return _check_finite_output(out, x, "lie_derivative")


def lie_derivative2(f: VectorFunction, g: VectorFunction, h: VectorFunction, x, method: str = "auto") -> np.ndarray:
    """Iterated Lie derivative L_f (L_g h) at ``x``.

    The inner derivative L_g h is treated as a field of x in its own right,
    so both the motion of g and the second derivative of h contribute.
    """
    for fld, role in ((f, "outer"), (g, "inner"), (h, "differentiated")):
        if fld.dim_in != h.dim_in or fld.dim_out != h.dim_in:
            raise DimensionMismatch(f"lie_derivative2: {role} field is not R^{h.dim_in} -> R^{h.dim_in}")
    x = _as_point(x, h.dim_in, "lie_derivative2")
    if h.constant is not None:
        return np.zeros(h.dim_out)
    if _use_exact(method, f, g, h):

        def inner(y):
            return directional_derivative(h.func, y, g.func(y))

        out = directional_derivative(inner, x, f.func(x))
    else:

        def inner_fd(y):
            return _fd_jacobian(h.func, y, h.dim_out) @ np.asarray(g.func(y), dtype=float)

        out = _fd_jacobian(inner_fd, x, h.dim_out) @ np.asarray(f.func(x), dtype=float)
    return _check_finite_output(out, x, "lie_derivative2")
