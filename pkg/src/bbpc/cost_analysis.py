"""Cost functionals and small-period cost asymptotics for switching schedules.

The running cost is the time average of the first state coordinate over one
period.  ``cost_exact`` evaluates it from an integrated trajectory;
``estimate_J2``/``estimate_J4`` evaluate the truncated time-average formulas
for the symmetric two-window and paired four-window schedules, and the
leading-coefficient routines extract the quadratic small-period growth rate
of those estimates along the periodic branch.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .lie_calculus import directional_derivative, second_directional_derivative
from .periodic_solver import (
    AccuracyError,
    FourLevelFamily,
    Trajectory,
    TwoLevelFamily,
    initial_state_expansion,
    predict_x0,
    _tilde_field,
)
from .schedule import _g17
from .system import ControlAffineSystem

__all__ = [
    "CostReport",
    "cost_exact",
    "estimate_J2",
    "estimate_J4",
    "leading_coefficient_cstar",
    "cbar_polynomial",
    "cbar_grid",
    "cost_report_to_json",
    "cost_report_from_json",
]


def _simpson_uniform(ys: np.ndarray, h: float) -> float:
    """Composite Simpson on a uniform grid, 3/8 tail when the interval count is odd."""
    n = len(ys) - 1
    if n < 2:
        raise ValueError("Simpson rule needs at least two intervals")
    total = 0.0
    if n % 2 == 1:
        # peel off the last three intervals for the 3/8 rule; n >= 3 here
        total += 3.0 * h / 8.0 * (ys[n - 3] + 3.0 * ys[n - 2] + 3.0 * ys[n - 1] + ys[n])
        ys = ys[: n - 2]
        n -= 3
    if n > 0:
        total += h / 3.0 * (ys[0] + ys[-1] + 4.0 * float(ys[1:-1:2].sum()) + 2.0 * float(ys[2:-2:2].sum()))
    return total


def cost_exact(traj: Trajectory, coordinate: int = 0) -> float:
    """Time average of one state coordinate over the sampled period.

    Integrates window by window with composite Simpson on the integrator's
    switch-aligned sample grid, so the integrand's kinks at switch times
    never cross a quadrature panel.  Requires at least three samples per
    window.
    """
    s = traj.schedule
    times = np.asarray(traj.times, dtype=float)
    values = np.asarray(traj.states[:, coordinate], dtype=float)
    bounds = s.switch_times
    total = 0.0
    for k in range(s.N):
        i0 = int(np.searchsorted(times, bounds[k]))
        i1 = int(np.searchsorted(times, bounds[k + 1]))
        if i1 >= len(times) or times[i1] != bounds[k + 1] or times[i0] != bounds[k]:
            raise ValueError(
                f"sample grid is not aligned with switch times of window {k + 1}; "
                "integrate with the schedule that produced it"
            )
        npts = i1 - i0 + 1
        if npts < 3:
            raise ValueError(
                f"window {k + 1} has only {npts} samples; need at least 3 for Simpson quadrature"
            )
        h = (bounds[k + 1] - bounds[k]) / (npts - 1)
        total += _simpson_uniform(values[i0 : i1 + 1], h)
    return total / s.tau


def _drift_self_derivative(sys: ControlAffineSystem, x):
    f0 = sys.drift.func
    return directional_derivative(f0, x, f0(x))


def estimate_J2(sys: ControlAffineSystem, x0, tau, level) -> float:
    """Truncated time-average cost for the symmetric two-window schedule.

    First coordinate of x0 + (tau/4) g + (tau^2/24) L_f0 f0 with every field
    evaluated at x0, where g is the control-weighted input field of the
    first window (assumed constant in the derivation; state-dependent input
    fields are simply evaluated at x0).  Accepts dual-number x0/tau so the
    small-period coefficient extraction can differentiate through it.
    """
    x = np.asarray(x0)
    g = _tilde_field(sys, level)
    lff = _drift_self_derivative(sys, x)
    out = x + (tau / 4.0) * np.asarray(g(x)) + (tau * tau / 24.0) * np.asarray(lff)
    return out[0]


def _mean_shift_estimate(family, x0, tau):
    x = np.asarray(x0)
    b1 = np.asarray(family.mean_shift_linear(x))
    b2 = np.asarray(family.mean_shift_quadratic(x))
    return (x + (tau / 2.0) * b1 + (tau * tau / 2.0) * b2)[0]


def estimate_J4(
    sys: ControlAffineSystem,
    x0,
    tau,
    alpha2: float,
    alpha4: float,
    levels,
) -> float:
    """Truncated time-average cost for the paired four-window schedule.

    First coordinate of the four-window time-average expansion through
    tau^2, with windows (1/2 - alpha4, alpha2, 1/2 - alpha2, alpha4) of the
    period and levels (u1, u2, -u1, -u2).  Raises ValueError when alpha2 or
    alpha4 leaves (0, 1/2) or the levels are not paired opposites.
    """
    family = FourLevelFamily(sys, levels, alpha2, alpha4)
    return _mean_shift_estimate(family, x0, tau)


def _derivatives_at_zero(F) -> tuple[float, float]:
    def wrapped(v):
        return np.array([F(v[0])])

    zero = np.zeros(1)
    one = np.array([1.0])
    d1 = directional_derivative(wrapped, zero, one)
    d2 = second_directional_derivative(wrapped, zero, one)
    return float(d1[0]), float(d2[0])


_FIT_NODES = (1e-3, 2e-3, 4e-3)


def _quadratic_coefficient_fit(F, linear: float) -> float:
    # quadratic model for (F(t) - linear t)/t^2 = c2 + c3 t + c4 t^2, solved
    # exactly through the three nodes; dividing out t^2 first keeps the
    # unmodeled t^5 content three orders below a direct cubic fit's leakage
    V = np.array([[1.0, t, t * t] for t in _FIT_NODES])
    y = np.array([(F(t) - linear * t) / (t * t) for t in _FIT_NODES])
    coef = np.linalg.solve(V, y)
    return float(coef[0])


def _leading_coefficient(F) -> float:
    linear, second = _derivatives_at_zero(F)
    exact = second / 2.0
    fitted = _quadratic_coefficient_fit(F, linear)
    # absolute floor covers coefficients that vanish identically (linear systems)
    tol = 1e-4 * max(abs(exact), abs(fitted)) + 1e-12
    if abs(fitted - exact) > tol:
        raise AccuracyError(
            f"quadratic-coefficient extraction disagrees: exact {exact:.17g}, "
            f"fit {fitted:.17g}"
        )
    return exact


def leading_coefficient_cstar(
    sys: ControlAffineSystem,
    family: TwoLevelFamily,
    variant: str = "printed",
) -> float:
    """Quadratic growth rate of the two-window cost estimate on the branch.

    Substitutes the branch prediction x0(tau) into ``estimate_J2`` and
    returns the tau^2 Taylor coefficient at tau = 0, computed by exact dual
    differentiation and cross-checked against a polynomial fit on small
    periods; the two must agree to 1e-4 relative or AccuracyError is raised.
    """
    exp = initial_state_expansion(sys, family)

    def F(t):
        return estimate_J2(sys, predict_x0(exp, t, variant=variant), t, family.level)

    return _leading_coefficient(F)


def cbar_polynomial(
    sys: ControlAffineSystem,
    alpha2: float,
    alpha4: float,
    levels,
    variant: str = "printed",
) -> float:
    """Quadratic growth rate of the four-window cost estimate on the branch.

    Same extraction as ``leading_coefficient_cstar`` but along the
    four-window closure branch at the given window fractions.  Polynomial in
    (alpha2, alpha4), so grid sweeps of this function map the improvement
    landscape of paired four-window schedules.
    """
    family = FourLevelFamily(sys, levels, alpha2, alpha4)
    exp = initial_state_expansion(sys, family)

    def F(t):
        return _mean_shift_estimate(family, predict_x0(exp, t, variant=variant), t)

    return _leading_coefficient(F)


def cbar_grid(
    sys: ControlAffineSystem,
    points,
    levels,
    variant: str = "printed",
    threads: int | None = None,
) -> list[float]:
    """``cbar_polynomial`` over a list of (alpha2, alpha4) pairs, input order kept.

    Grid points are independent, so they may be evaluated on a thread pool;
    ``threads`` caps the pool size (None or 1 runs sequentially).  Results are
    collected by input index either way, so the output is deterministic.
    """
    points = [(float(a2), float(a4)) for a2, a4 in points]

    def one(p):
        return cbar_polynomial(sys, p[0], p[1], levels, variant=variant)

    if threads is None or threads <= 1 or len(points) <= 1:
        return [one(p) for p in points]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=min(threads, len(points))) as pool:
        return list(pool.map(one, points))


@dataclass(frozen=True)
class CostReport:
    """Cost summary of one designed schedule, ready for serialization."""

    kind: str
    tau: float
    alphas: tuple[float, ...]
    x0: tuple[float, ...]
    J: float
    J_est: float | None


def cost_report_to_json(r: CostReport) -> str:
    """Serialize with 17 significant digits so float64 values round-trip."""
    alphas = ", ".join(_g17(a) for a in r.alphas)
    x0 = ", ".join(_g17(v) for v in r.x0)
    jest = "null" if r.J_est is None else _g17(r.J_est)
    return (
        "{"
        + f'"kind": {json.dumps(r.kind)}, "tau": {_g17(r.tau)}, "alphas": [{alphas}], '
        + f'"x0": [{x0}], "J": {_g17(r.J)}, "J_est": {jest}'
        + "}"
    )


def cost_report_from_json(text: str) -> CostReport:
    doc = json.loads(text)
    jest = doc.get("J_est")
    return CostReport(
        kind=doc["kind"],
        tau=float(doc["tau"]),
        alphas=tuple(float(a) for a in doc["alphas"]),
        x0=tuple(float(v) for v in doc["x0"]),
        J=float(doc["J"]),
        J_est=None if jest is None else float(jest),
    )
