"""Truncated Chen-Fliess expansions for bang-bang switched systems.

Over one period the switched system is driftless in the indicator controls
v_j(t) = 1 on window j, so the series for x(t) is weighted by iterated
integrals of indicators.  Those integrals have piecewise-polynomial closed
forms (V1/V2/V3 below), which makes evaluating the truncation exact and
cheap for parameter sweeps.

Conventions.  Window indices are 1-based.  The second-level weight V2(i, j)
multiplies L_{f_j} f_i, the third-level weight V3(i, j, l) multiplies
L_{f_l} L_{f_j} f_i, with L_f h = (dh/dx) f.  All fields are evaluated at
the expansion point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lie_calculus import lie_derivative, lie_derivative2
from .schedule import BangBangSchedule
from .system import ControlAffineSystem

__all__ = [
    "SwitchGrid",
    "ExpansionResult",
    "V1",
    "V2",
    "V3",
    "terminal_state_expansion",
    "periodicity_residual",
    "average_state_expansion",
    "residual_alpha_form",
    "average_alpha_form",
    "residual_two_level",
    "residual_three_level",
    "residual_four_level",
    "average_two_level",
    "average_three_level",
    "average_four_level",
]


@dataclass(frozen=True)
class SwitchGrid:
    """Strictly increasing switching times 0 = t_0 < t_1 < ... < t_N = tau."""

    times: tuple[float, ...]

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        object.__setattr__(self, "times", times)
        if len(times) < 2:
            raise ValueError("a switch grid needs at least t_0 and t_N")
        if times[0] != 0.0:
            raise ValueError(f"grid must start at 0, got {times[0]}")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError(f"switch times must increase strictly: {times}")

    @classmethod
    def from_schedule(cls, s: BangBangSchedule) -> "SwitchGrid":
        return cls(s.switch_times)

    @property
    def tau(self) -> float:
        return self.times[-1]

    @property
    def N(self) -> int:
        return len(self.times) - 1

    def duration(self, i: int) -> float:
        return self.times[i] - self.times[i - 1]

    def _check_index(self, i: int, name: str) -> None:
        if not 1 <= i <= self.N:
            raise IndexError(f"window index {name}={i} outside 1..{self.N}")

    def _check_time(self, t: float) -> float:
        t = float(t)
        if not 0.0 <= t <= self.tau:
            raise ValueError(f"time {t} outside [0, {self.tau}]")
        return t


def V1(grid: SwitchGrid, i: int, t: float) -> float:
    """First-order weight: time spent in window i up to t."""
    grid._check_index(i, "i")
    t = grid._check_time(t)
    lo = grid.times[i - 1]
    hi = grid.times[i]
    return min(max(t, lo), hi) - lo


def V2(grid: SwitchGrid, i: int, j: int, t: float) -> float:
    """Second-order weight: integral of v_i(s) V1(j, s) up to t.

    Zero for i < j because window j has not accumulated anything while
    window i is active.
    """
    grid._check_index(i, "i")
    grid._check_index(j, "j")
    t = grid._check_time(t)
    if i < j:
        return 0.0
    lo = grid.times[i - 1]
    s = min(max(t, lo), grid.times[i]) - lo
    if i == j:
        return 0.5 * s * s
    return grid.duration(j) * s


def _W2(grid: SwitchGrid, j: int, l: int, s: float) -> float:
    # antiderivative of V2(j, l, .) from 0 to s, for j >= l
    tjm1 = grid.times[j - 1]
    tj = grid.times[j]
    if s <= tjm1:
        return 0.0
    r = min(s, tj) - tjm1
    if j == l:
        w = r ** 3 / 6.0
    else:
        w = grid.duration(l) * r * r / 2.0
    if s > tj:
        w += V2(grid, j, l, tj) * (s - tj)
    return w


def V3(grid: SwitchGrid, i: int, j: int, l: int, t: float) -> float:
    """Third-order weight: integral of v_i(s) V2(j, l, s) up to t.

    The integrand is piecewise quadratic, so the value is assembled from the
    exact antiderivative of V2(j, l, .) restricted to window i.
    """
    grid._check_index(i, "i")
    grid._check_index(j, "j")
    grid._check_index(l, "l")
    t = grid._check_time(t)
    if j < l:
        return 0.0
    lo = grid.times[i - 1]
    if t <= lo:
        return 0.0
    upper = min(t, grid.times[i])
    return _W2(grid, j, l, upper) - _W2(grid, j, l, lo)


@dataclass(frozen=True)
class ExpansionResult:
    """Truncated expansion value with its remainder-order bookkeeping."""

    value: np.ndarray
    order: int
    remainder_bound_exponent: int

    def __post_init__(self):
        if self.order not in (1, 2, 3):
            raise ValueError(f"order must be 1, 2, or 3, got {self.order}")
        if self.remainder_bound_exponent != self.order + 1:
            raise ValueError("remainder bound exponent must be order + 1")


def _composite_fields(sys: ControlAffineSystem, s: BangBangSchedule):
    if s.n_channels != sys.n_controls:
        raise ValueError(f"schedule has {s.n_channels} channels, system expects {sys.n_controls}")
    return [sys.composite(level) for level in s.levels]


def terminal_state_expansion(
    sys: ControlAffineSystem,
    s: BangBangSchedule,
    x0,
    order: int = 3,
) -> ExpansionResult:
    """Truncated series for x(tau) started at x0 under the schedule.

    Retains one, two, or three Lie-derivative levels; the dropped remainder
    is O(tau^(order+1)) for fields smooth near x0.
    """
    if order not in (1, 2, 3):
        raise ValueError(f"order must be 1, 2, or 3, got {order}")
    fields = _composite_fields(sys, s)
    grid = SwitchGrid.from_schedule(s)
    tau = grid.tau
    n = sys.n_states
    x0 = np.asarray(x0, dtype=float)
    val = x0.astype(float).copy()
    N = grid.N
    for i in range(1, N + 1):
        val = val + fields[i - 1](x0) * V1(grid, i, tau)
    if order >= 2:
        for i in range(1, N + 1):
            for j in range(1, i + 1):
                w = V2(grid, i, j, tau)
                if w != 0.0:
                    val = val + lie_derivative(fields[j - 1], fields[i - 1], x0) * w
    if order >= 3:
        for i in range(1, N + 1):
            for j in range(1, i + 1):
                for l in range(1, j + 1):
                    w = V3(grid, i, j, l, tau)
                    if w != 0.0:
                        term = lie_derivative2(fields[l - 1], fields[j - 1], fields[i - 1], x0)
                        val = val + term * w
    return ExpansionResult(value=np.asarray(val, dtype=float).reshape(n), order=order, remainder_bound_exponent=order + 1)


def periodicity_residual(sys: ControlAffineSystem, s: BangBangSchedule, x0, order: int = 3) -> np.ndarray:
    """Defect of the truncated periodicity condition x(tau) = x0.

    order=3 returns the raw terminal defect (remainder O(tau^4)); order=2
    returns the tau-normalized defect whose root equation matches the
    alpha-parametrized first-order form (remainder O(tau^2) after division).
    """
    if order == 3:
        return terminal_state_expansion(sys, s, x0, order=3).value - np.asarray(x0, dtype=float)
    if order == 2:
        diff = terminal_state_expansion(sys, s, x0, order=2).value - np.asarray(x0, dtype=float)
        return diff / s.tau
    raise ValueError(f"periodicity residual is defined for orders 2 and 3, got {order}")


def _avg_weight1(grid: SwitchGrid, i: int) -> float:
    # integral of V1(i, .) over [0, tau]
    ti = grid.times[i]
    di = grid.duration(i)
    return 0.5 * di * (di + 2.0 * (grid.tau - ti))


def _avg_weight2(grid: SwitchGrid, i: int, j: int) -> float:
    # integral of V2(i, j, .) over [0, tau], for i >= j
    ti = grid.times[i]
    di = grid.duration(i)
    if i == j:
        return di * di * (di + 3.0 * (grid.tau - ti)) / 6.0
    return 0.5 * di * grid.duration(j) * (di + 2.0 * (grid.tau - ti))


def average_state_expansion(
    sys: ControlAffineSystem,
    s: BangBangSchedule,
    x0,
    order: int = 2,
) -> ExpansionResult:
    """Truncated series for the time average (1/tau) integral of x(t).

    Integrating the state series term by term turns each V weight into its
    period integral; two Lie levels leave an O(tau^3) remainder.
    """
    if order not in (1, 2):
        raise ValueError(f"average expansion supports orders 1 and 2, got {order}")
    fields = _composite_fields(sys, s)
    grid = SwitchGrid.from_schedule(s)
    tau = grid.tau
    n = sys.n_states
    x0 = np.asarray(x0, dtype=float)
    val = x0.astype(float).copy()
    N = grid.N
    for i in range(1, N + 1):
        val = val + fields[i - 1](x0) * (_avg_weight1(grid, i) / tau)
    if order >= 2:
        for i in range(1, N + 1):
            for j in range(1, i + 1):
                w = _avg_weight2(grid, i, j) / tau
                if w != 0.0:
                    val = val + lie_derivative(fields[j - 1], fields[i - 1], x0) * w
    return ExpansionResult(value=np.asarray(val, dtype=float).reshape(n), order=order, remainder_bound_exponent=order + 1)


def _alphas_of(s: BangBangSchedule) -> list[float]:
    return [d / s.tau for d in s.durations[1:]]


def residual_alpha_form(sys: ControlAffineSystem, s: BangBangSchedule, x0) -> np.ndarray:
    """Tau-normalized first-order periodicity defect in alpha parameters.

    Equals periodicity_residual(order=2) identically; kept as the printed
    alpha-parametrized assembly for cross-checking.
    """
    fields = _composite_fields(sys, s)
    if len(fields) < 2:
        raise ValueError("the alpha form needs at least two windows")
    x0 = np.asarray(x0, dtype=float)
    tau = s.tau
    al = _alphas_of(s)  # al[j-2] is alpha_j for j = 2..N
    N = s.N
    f = [fld(x0) for fld in fields]

    def ld(a: int, b: int) -> np.ndarray:
        return lie_derivative(fields[a - 1], fields[b - 1], x0)

    val = f[0].astype(float).copy()
    for j in range(2, N + 1):
        val = val + al[j - 2] * (f[j - 1] - f[0])
    bracket = ld(1, 1).astype(float)
    for j in range(2, N + 1):
        bracket = bracket + 2.0 * al[j - 2] * (ld(1, j) - ld(1, 1))
    for j in range(2, N + 1):
        bracket = bracket + al[j - 2] ** 2 * (ld(1, 1) - 2.0 * ld(1, j) + ld(j, j))
    for j in range(2, N + 1):
        for i in range(j + 1, N + 1):
            bracket = bracket + 2.0 * al[i - 2] * al[j - 2] * (ld(1, 1) - ld(1, i) - ld(1, j) + ld(j, i))
    return val + 0.5 * tau * bracket


def average_alpha_form(sys: ControlAffineSystem, s: BangBangSchedule, x0) -> np.ndarray:
    """Time-averaged state in alpha parameters (two Lie levels retained).

    Equals average_state_expansion(order=2) identically; printed assembly
    kept for cross-checking.
    """
    fields = _composite_fields(sys, s)
    if len(fields) < 2:
        raise ValueError("the alpha form needs at least two windows")
    x0 = np.asarray(x0, dtype=float)
    tau = s.tau
    al = _alphas_of(s)
    N = s.N
    f = [fld(x0) for fld in fields]

    def ld(a: int, b: int) -> np.ndarray:
        return lie_derivative(fields[a - 1], fields[b - 1], x0)

    def tail(j: int) -> float:
        # sum of alpha_i for i > j
        return sum(al[i - 2] for i in range(j + 1, N + 1))

    val = x0.astype(float).copy()
    lin = f[0].astype(float).copy()
    for j in range(2, N + 1):
        a = al[j - 2]
        lin = lin + a * (a + 2.0 * tail(j)) * (f[j - 1] - f[0])
    val = val + 0.5 * tau * lin
    quad = ld(1, 1).astype(float)
    for j in range(2, N + 1):
        a = al[j - 2]
        quad = quad + 3.0 * a * (a + 2.0 * tail(j)) * (ld(1, j) - ld(1, 1))
    for j in range(2, N + 1):
        a = al[j - 2]
        quad = quad + a * a * (a + 3.0 * tail(j)) * (2.0 * ld(1, 1) - 3.0 * ld(1, j) + ld(j, j))
    for i in range(2, N + 1):
        for j in range(i + 1, N + 1):
            for l in range(j + 1, N + 1):
                quad = quad + 6.0 * al[i - 2] * al[j - 2] * al[l - 2] * (
                    2.0 * ld(1, 1) - 2.0 * ld(1, i) - ld(1, j) + ld(i, j)
                )
    for i in range(2, N + 1):
        for j in range(i + 1, N + 1):
            quad = quad + 3.0 * al[i - 2] * al[j - 2] ** 2 * (
                2.0 * ld(1, 1) - 2.0 * ld(1, i) - ld(1, j) + ld(i, j)
            )
    return val + tau * tau / 6.0 * quad


def _require_equal_halves(s: BangBangSchedule) -> None:
    tol = 1e-12 * s.tau
    if abs(s.durations[0] - 0.5 * s.tau) > tol or abs(s.durations[1] - 0.5 * s.tau) > tol:
        raise ValueError("two-level form needs equal half-period windows")


def residual_two_level(sys: ControlAffineSystem, s: BangBangSchedule, x0) -> np.ndarray:
    """Printed two-level periodicity form (three Lie levels, tau-normalized).

    Carries an overall factor 2 and drops terms proportional to f1 + f2
    relative to the raw normalized defect; its root branch agrees with the
    generic condition through the retained orders.
    """
    if s.N != 2:
        raise ValueError("two-level form needs exactly two windows")
    _require_equal_halves(s)
    fields = _composite_fields(sys, s)
    x0 = np.asarray(x0, dtype=float)
    f1, f2 = fields
    tau = s.tau
    v = f1(x0) + f2(x0)
    v = v + 0.25 * tau * (lie_derivative(f1, f1, x0) - lie_derivative(f2, f2, x0))
    v = v + tau * tau / 24.0 * (lie_derivative2(f1, f1, f1, x0) + lie_derivative2(f2, f2, f2, x0))
    return v


def residual_three_level(sys: ControlAffineSystem, s: BangBangSchedule, x0) -> np.ndarray:
    """Printed three-level periodicity form (two Lie levels, tau-normalized).

    Exactly twice the tau-normalized order-2 defect for the constrained
    duration pattern (tau/2, alpha2 tau, (1/2 - alpha2) tau).
    """
    if s.N != 3:
        raise ValueError("three-level form needs exactly three windows")
    tau = s.tau
    if abs(s.durations[0] - 0.5 * tau) > 1e-12 * tau:
        raise ValueError("three-level form needs a first window of half the period")
    a = s.durations[1] / tau
    fields = _composite_fields(sys, s)
    x0 = np.asarray(x0, dtype=float)
    f = [fld(x0) for fld in fields]

    def ld(i: int, j: int) -> np.ndarray:
        return lie_derivative(fields[i - 1], fields[j - 1], x0)

    v = f[0] + f[2] + 2.0 * a * (f[1] - f[2])
    bracket = ld(1, 1) + 2.0 * ld(1, 3) + ld(3, 3)
    bracket = bracket + 4.0 * a * (ld(1, 2) - ld(1, 3) + ld(2, 3) - ld(3, 3))
    bracket = bracket + 4.0 * a * a * (ld(2, 2) - 2.0 * ld(2, 3) + ld(3, 3))
    return v + 0.25 * tau * bracket


def _n4_params(s: BangBangSchedule) -> tuple[float, float]:
    tau = s.tau
    a2 = s.durations[1] / tau
    a4 = s.durations[3] / tau
    if abs(s.durations[0] - (0.5 - a4) * tau) > 1e-12 * tau or abs(s.durations[2] - (0.5 - a2) * tau) > 1e-12 * tau:
        raise ValueError("four-level form needs durations ((1/2-a4), a2, (1/2-a2), a4) tau")
    return a2, a4


def residual_four_level(sys: ControlAffineSystem, s: BangBangSchedule, x0) -> np.ndarray:
    """Printed four-level periodicity form (three Lie levels, tau-normalized).

    Like the two-level form this is scaled by 2 and reduced modulo terms that
    vanish on the solution branch; see residual_two_level.
    """
    if s.N != 4:
        raise ValueError("four-level form needs exactly four windows")
    a2, a4 = _n4_params(s)
    tau = s.tau
    fields = _composite_fields(sys, s)
    x0 = np.asarray(x0, dtype=float)
    f = [fld(x0) for fld in fields]

    def ld(i: int, j: int) -> np.ndarray:
        return lie_derivative(fields[i - 1], fields[j - 1], x0)

    def ld2(i: int, j: int, k: int) -> np.ndarray:
        return lie_derivative2(fields[i - 1], fields[j - 1], fields[k - 1], x0)

    v = f[0] + f[2]
    v = v + 0.25 * tau * (ld(1, 1) - ld(3, 3))
    v = v + tau * tau / 24.0 * (ld2(1, 1, 1) + ld2(3, 3, 3))
    v = v + a2 * (
        2.0 * (f[1] - f[2])
        + tau * (ld(1, 2) + ld(3, 3))
        + 0.25 * tau * tau * (ld2(1, 1, 2) - ld2(3, 3, 3))
    )
    v = v - a4 * (
        2.0 * (f[0] - f[3])
        + tau * (ld(1, 1) + ld(4, 3))
        + 0.25 * tau * tau * (ld2(1, 1, 1) - ld2(4, 3, 3))
    )
    v = v + a2 * a2 * tau * (ld(2, 2) - ld(3, 3) + 0.5 * tau * (ld2(3, 3, 3) + ld2(1, 2, 2)))
    v = v + 2.0 * a2 * a4 * tau * (ld(4, 3) - ld(1, 2) - 0.5 * tau * (ld2(1, 1, 2) + ld2(4, 3, 3)))
    v = v + a4 * a4 * tau * (ld(1, 1) - ld(4, 4) + 0.5 * tau * (ld2(1, 1, 1) + ld2(4, 4, 3)))
    return v


def average_two_level(sys: ControlAffineSystem, s: BangBangSchedule, x0) -> np.ndarray:
    """Printed two-level time average (reduced on the solution branch).

    Drops a (tau/4)(f1 + f2) term relative to the raw order-2 average, which
    is O(tau^2) once x0 lies on the periodic branch.
    """
    if s.N != 2:
        raise ValueError("two-level form needs exactly two windows")
    _require_equal_halves(s)
    fields = _composite_fields(sys, s)
    x0 = np.asarray(x0, dtype=float)
    f1, f2 = fields
    tau = s.tau
    v = x0 + tau / 8.0 * (f1(x0) - f2(x0))
    v = v + tau * tau / 48.0 * (lie_derivative(f1, f1, x0) + lie_derivative(f2, f2, x0))
    return v


def average_three_level(sys: ControlAffineSystem, s: BangBangSchedule, x0) -> np.ndarray:
    """Printed three-level time average (pure substitution, no reduction)."""
    if s.N != 3:
        raise ValueError("three-level form needs exactly three windows")
    tau = s.tau
    if abs(s.durations[0] - 0.5 * tau) > 1e-12 * tau:
        raise ValueError("three-level form needs a first window of half the period")
    a = s.durations[1] / tau
    fields = _composite_fields(sys, s)
    x0 = np.asarray(x0, dtype=float)
    f = [fld(x0) for fld in fields]

    def ld(i: int, j: int) -> np.ndarray:
        return lie_derivative(fields[i - 1], fields[j - 1], x0)

    v = x0 + tau / 8.0 * (3.0 * f[0] + f[2] + 4.0 * a * (1.0 - a) * (f[1] - f[2]))
    bracket = 4.0 * ld(1, 1) + 3.0 * ld(1, 3) + ld(3, 3)
    bracket = bracket + 6.0 * a * (2.0 * ld(1, 2) - 2.0 * ld(1, 3) + ld(2, 3) - ld(3, 3))
    bracket = bracket + 12.0 * a * a * (ld(1, 3) - ld(1, 2) + ld(2, 2) - 2.0 * ld(2, 3) + ld(3, 3))
    return v + tau * tau / 48.0 * bracket


def average_four_level(sys: ControlAffineSystem, s: BangBangSchedule, x0) -> np.ndarray:
    """Printed four-level time average (reduced on the solution branch)."""
    if s.N != 4:
        raise ValueError("four-level form needs exactly four windows")
    a2, a4 = _n4_params(s)
    tau = s.tau
    fields = _composite_fields(sys, s)
    x0 = np.asarray(x0, dtype=float)
    f = [fld(x0) for fld in fields]

    def ld(i: int, j: int) -> np.ndarray:
        return lie_derivative(fields[i - 1], fields[j - 1], x0)

    lin = 0.25 * (f[0] - f[2])
    lin = lin + a2 * (f[0] + f[2]) - a4 * (f[0] + f[3]) + a2 * a2 * (f[1] - f[2])
    lin = lin + a4 * (a4 - 2.0 * a2) * (f[0] - f[3])
    quad = (ld(1, 1) + ld(3, 3)) / 12.0
    quad = quad + 0.5 * a2 * (ld(1, 1) - ld(3, 3))
    quad = quad - 0.5 * a4 * (ld(1, 1) - ld(4, 3))
    quad = quad + a2 * a2 * (ld(1, 2) + ld(3, 3))
    quad = quad + a4 * a4 * (ld(1, 1) + ld(4, 4))
    quad = quad - 2.0 * a2 * a4 * (ld(1, 1) + ld(4, 3))
    return x0 + 0.5 * tau * lin + 0.25 * tau * tau * quad
