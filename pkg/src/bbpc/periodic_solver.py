"""Periodic orbits of bang-bang switched systems.

Pipeline: a schedule family provides the truncated tau-normalized closure
condition G(x0, tau) = A(x0) + tau B(x0) + tau^2 C(x0); implicit-function
coefficients of its root branch give the small-period prediction
x0(tau) = c1 tau + c2 tau^2; fixed-step integration realizes the switched
flow; Newton shooting refines the prediction into a genuine periodic orbit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lie_calculus import directional_derivative, second_directional_derivative
from .schedule import (
    BangBangSchedule,
    ControlBox,
    corollary_schedule_N2,
    corollary_schedule_N4,
)
from .system import ControlAffineSystem

__all__ = [
    "DivergenceError",
    "ConvergenceError",
    "SingularSystemError",
    "AccuracyError",
    "StepStats",
    "Trajectory",
    "PeriodicOrbit",
    "InitialStateExpansion",
    "TwoLevelFamily",
    "FourLevelFamily",
    "default_step_target",
    "integrate",
    "trajectory_to_csv",
    "initial_state_expansion",
    "predict_x0",
    "shoot",
    "find_orbit_attractor",
    "continuation_sweep",
    "SweepItem",
]

STEP_CAP = 0.2  # keeps |lambda h| inside the RK4 stability region on stiff windows
COARSE_STEP = 0.25


class DivergenceError(RuntimeError):
    """State norm exceeded the divergence bound during integration."""

    def __init__(self, message: str, time: float, norm: float):
        super().__init__(message)
        self.time = time
        self.norm = norm


class ConvergenceError(RuntimeError):
    """Newton shooting did not reach tolerance within the iteration budget."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class SingularSystemError(RuntimeError):
    """A linear system central to the method is numerically singular."""


class AccuracyError(RuntimeError):
    """Local error estimate exceeded the configured tolerance."""


@dataclass(frozen=True)
class StepStats:
    n_steps: int
    max_local_error: float


@dataclass(frozen=True)
class Trajectory:
    """Sampled solution of the switched system over one period.

    Sample times include every switch time exactly: the switch grid is the
    schedule's stored cumulative sum, never re-accumulated per step.
    """

    times: np.ndarray
    states: np.ndarray
    schedule: BangBangSchedule
    step_stats: StepStats

    @property
    def samples(self) -> list[tuple[float, np.ndarray]]:
        return [(float(t), x) for t, x in zip(self.times, self.states)]

    @property
    def terminal_state(self) -> np.ndarray:
        return self.states[-1]


@dataclass(frozen=True)
class PeriodicOrbit:
    x0: np.ndarray
    tau: float
    trajectory: Trajectory
    closure_residual: float
    newton_iterations: int


@dataclass(frozen=True)
class InitialStateExpansion:
    """Branch coefficients of the truncated closure condition near tau = 0.

    ``c2`` follows the printed branch-correction formula, which counts the
    mixed tau/x0 derivative once; ``c2_taylor`` counts it twice and is the
    genuine quadratic Taylor coefficient of the root branch.  Predictions
    meant to track refined orbits should use ``c2_taylor``.
    """

    c1: np.ndarray
    c2: np.ndarray
    c2_taylor: np.ndarray
    jacobian_determinant: float
    jacobian_condition: float
    validity_note: str


def _tilde_field(sys: ControlAffineSystem, level):
    """Raw dual-safe closure for the control-weighted sum of input fields."""
    funcs = [g.func for g in sys.control_fields]
    weights = [float(c) for c in level]

    def combo(x):
        acc = weights[0] * funcs[0](x)
        for w, f in zip(weights[1:], funcs[1:]):
            acc = acc + w * f(x)
        return acc

    return combo


def _lie(funcs_outer, base):
    """Raw closure for x -> d(base)/dx applied along outer(x), dual-safe."""

    def val(x):
        return directional_derivative(base, x, funcs_outer(x))

    return val


class TwoLevelFamily:
    """Symmetric two-window schedules u, -u with equal half-period windows.

    Provides the closure condition G = A + tau B + tau^2 C with
    A = f0, B = (1/4) L_g f0, C = (1/24)(L_f0 L_f0 f0 + L_g L_g f0),
    g the control-weighted input field of the first window.
    """

    def __init__(self, sys: ControlAffineSystem, level, box: ControlBox | None = None):
        level = tuple(float(c) for c in level)
        if len(level) != sys.n_controls:
            raise ValueError(f"level has {len(level)} channels, system expects {sys.n_controls}")
        if level[0] == 0.0:
            raise ValueError("first-channel amplitude must be nonzero for the symmetric pair")
        self.system = sys
        self.level = level
        self.box = box
        f0 = sys.drift.func
        g = _tilde_field(sys, level)
        self._f0 = f0
        self._g = g
        lf0f0 = _lie(lambda x: f0(x), f0)
        lgf0 = _lie(g, f0)
        self._A = f0
        self._B = lambda x: 0.25 * directional_derivative(f0, x, g(x))
        ll00 = _lie(f0, lf0f0)
        ll11 = _lie(g, lgf0)
        self._C = lambda x: (ll00(x) + ll11(x)) / 24.0
        self._lf0f0 = lf0f0

    @property
    def n_windows(self) -> int:
        return 2

    def schedule(self, tau: float) -> BangBangSchedule:
        return corollary_schedule_N2(self.level, tau, box=self.box)

    def residual(self, x0, tau: float):
        x0 = np.asarray(x0, dtype=float)
        return self._A(x0) + tau * self._B(x0) + tau * tau * self._C(x0)

    def mean_shift_linear(self, x):
        # time average deviates from x0 by (tau/2) times this, to first order
        return 0.5 * np.asarray(self._g(x))

    def mean_shift_quadratic(self, x):
        return np.asarray(self._lf0f0(x)) / 12.0


class FourLevelFamily:
    """Four-window schedules with paired opposite vertices u1,u2,-u1,-u2.

    Window fractions are (1/2 - a4, a2, 1/2 - a2, a4).  The closure pieces
    A, B, C and the averaged-state terms follow the four-level
    branch-and-average formulas with the two control-weighted input fields
    g1 (windows 1/3) and g2 (windows 2/4).
    """

    def __init__(
        self,
        sys: ControlAffineSystem,
        levels,
        alpha2: float,
        alpha4: float,
        box: ControlBox | None = None,
    ):
        levels = tuple(tuple(float(c) for c in lv) for lv in levels)
        if len(levels) != 4:
            raise ValueError("four-level family needs exactly four control levels")
        for lv in levels:
            if len(lv) != sys.n_controls:
                raise ValueError("level width does not match the system's control count")
        tol = 1e-12
        if any(abs(a + b) > tol * max(1.0, abs(a)) for a, b in zip(levels[0], levels[2])):
            raise ValueError("third level must be the negative of the first")
        if any(abs(a + b) > tol * max(1.0, abs(a)) for a, b in zip(levels[1], levels[3])):
            raise ValueError("fourth level must be the negative of the second")
        if not (0.0 < alpha2 < 0.5 and 0.0 < alpha4 < 0.5):
            raise ValueError("window fractions alpha2, alpha4 must lie in (0, 1/2)")
        self.system = sys
        self.levels = levels
        self.alpha2 = float(alpha2)
        self.alpha4 = float(alpha4)
        self.box = box
        a2, a4 = self.alpha2, self.alpha4
        f0 = sys.drift.func
        g1 = _tilde_field(sys, levels[0])
        g2 = _tilde_field(sys, levels[1])
        self._f0, self._g1, self._g2 = f0, g1, g2

        lf0 = _lie(lambda x: f0(x), f0)
        lg1 = _lie(g1, f0)
        lg2 = _lie(g2, f0)

        def A(x):
            return f0(x) + (a2 - a4) * (g1(x) + g2(x))

        def B(x):
            v = 0.5 * lg1(x) + 2.0 * a2 * lf0(x)
            v = v - a4 * (2.0 * lf0(x) + lg1(x) - lg2(x))
            v = v + (a2 - a4) ** 2 * (lg1(x) + lg2(x))
            return 0.5 * v

        F = (lambda x: f0(x), g1, g2)
        inner = (lf0, lg1, lg2)
        cc = {
            (0, 0): 1.0 / 24 + a2 * a2 / 2 - a2 * a4 + a4 * a4,
            (1, 1): 1.0 / 24 - a4 / 8 + a2 * a2 / 4 - a2 * a4 / 2 + a4 * a4 / 2 - a2 ** 3 / 6 - a4 ** 3 / 6,
            (0, 1): a2 / 4 - a4 / 4 - a2 * a2 / 4 + a4 * a4 / 2 + (a2 ** 3 - a4 ** 3) / 6 - a2 * a2 * a4 / 2 + a2 * a4 * a4 / 2,
            (1, 0): a2 / 4 - a4 / 8 - a2 * a4 / 2 + a4 * a4 / 2 + a2 ** 3 / 6 - a2 * a2 * a4 / 2 + a2 * a4 * a4 / 2 - a4 ** 3 / 6,
            (2, 0): -a4 / 8 + a2 * a4 / 2 - a4 * a4 / 2 + a2 ** 3 / 6 - a2 * a2 * a4 / 2 + a2 * a4 * a4 / 2 - a4 ** 3 / 6,
            (0, 2): a2 * a2 / 4 - a4 * a4 / 2 + a2 ** 3 / 6 - a2 * a2 * a4 / 2 + a2 * a4 * a4 / 2 - a4 ** 3 / 6,
            (1, 2): a2 * a2 / 4,
            (2, 1): -a4 / 8 - a2 * a4 / 2,
            (2, 2): a4 * a4 / 2 + a2 ** 3 / 6 - a2 * a4 * a4 / 2 + a4 ** 3 / 6,
        }

        def C(x):
            acc = None
            for (a, b), coef in cc.items():
                if coef == 0.0:
                    continue
                term = coef * directional_derivative(inner[b], x, F[a](x))
                acc = term if acc is None else acc + term
            return acc

        self._A, self._B, self._C = A, B, C
        self._lf0, self._lg1, self._lg2 = lf0, lg1, lg2

    @property
    def n_windows(self) -> int:
        return 4

    def schedule(self, tau: float) -> BangBangSchedule:
        return corollary_schedule_N4(self.levels, self.alpha2, self.alpha4, tau, box=self.box)

    def residual(self, x0, tau: float):
        x0 = np.asarray(x0, dtype=float)
        return self._A(x0) + tau * self._B(x0) + tau * tau * self._C(x0)

    def mean_shift_linear(self, x):
        a2, a4 = self.alpha2, self.alpha4
        f0v = self._f0(x)
        g1v = self._g1(x)
        g2v = self._g2(x)
        v = 0.5 * g1v + 2.0 * a2 * f0v
        v = v - a4 * (2.0 * f0v + g1v - g2v)
        v = v + (a2 - a4) ** 2 * (g1v + g2v)
        return np.asarray(v)

    def mean_shift_quadratic(self, x):
        a2, a4 = self.alpha2, self.alpha4
        lf0 = self._lf0(x)
        lg1 = self._lg1(x)
        lg2 = self._lg2(x)
        v = lf0 / 12.0 + 0.5 * a2 * lg1 - 0.25 * a4 * (lg1 + lg2)
        v = v + a2 * a2 * lf0 + a4 * (a4 - 2.0 * a2) * (lf0 + 0.5 * lg1 - 0.5 * lg2)
        return np.asarray(v)


def initial_state_expansion(sys: ControlAffineSystem, family) -> InitialStateExpansion:
    """Implicit-function coefficients of the closure branch at tau = 0.

    All derivatives of G(x0, tau) = A + tau B + tau^2 C are taken exactly at
    the origin with the dual-number oracle.  Raises SingularSystemError when
    the leading Jacobian is numerically singular (condition above 1e12).
    """
    if family.system is not sys:
        raise ValueError("family was built for a different system")
    n = sys.n_states
    xb = np.zeros(n)
    A, B, C = family._A, family._B, family._C
    JA = np.empty((n, n))
    eye = np.eye(n)
    for k in range(n):
        JA[:, k] = directional_derivative(A, xb, eye[k])
    det = float(np.linalg.det(JA))
    cond = float(np.linalg.cond(JA))
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularSystemError(
            f"leading closure Jacobian is numerically singular: determinant {det:.17g}, "
            f"condition number {cond:.3e}"
        )
    B0 = np.asarray(B(xb), dtype=float)
    C0 = np.asarray(C(xb), dtype=float)
    c1 = np.linalg.solve(JA, -B0)
    H = np.asarray(second_directional_derivative(A, xb, c1), dtype=float)
    JBc1 = np.asarray(directional_derivative(B, xb, c1), dtype=float)
    c2_printed = -0.5 * np.linalg.solve(JA, H + JBc1 + 2.0 * C0)
    c2_taylor = -0.5 * np.linalg.solve(JA, H + 2.0 * JBc1 + 2.0 * C0)
    A0 = np.asarray(A(xb), dtype=float)
    note = (
        "branch coefficients about the origin; c2 counts the mixed derivative once "
        "(printed correction), c2_taylor twice (true Taylor coefficient)."
    )
    if float(np.max(np.abs(A0))) > 1e-12:
        note += (
            " The leading condition does not vanish at the origin for these window "
            f"fractions (|A(0)| = {float(np.max(np.abs(A0))):.3e}); coefficients are the "
            "formal surface values and predictions are seeds only."
        )
    if not (np.all(np.isfinite(c1)) and np.all(np.isfinite(c2_printed)) and np.all(np.isfinite(c2_taylor))):
        raise SingularSystemError("branch coefficients are not finite")
    return InitialStateExpansion(
        c1=c1,
        c2=c2_printed,
        c2_taylor=c2_taylor,
        jacobian_determinant=det,
        jacobian_condition=cond,
        validity_note=note,
    )


def predict_x0(exp: InitialStateExpansion, tau: float, variant: str = "taylor") -> np.ndarray:
    """Quadratic branch prediction c1 tau + c2 tau^2.

    variant="taylor" (default) uses the true Taylor coefficient and tracks
    refined orbits to O(tau^3); variant="printed" uses the printed
    correction formula.
    """
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    if variant == "taylor":
        c2 = exp.c2_taylor
    elif variant == "printed":
        c2 = exp.c2
    else:
        raise ValueError(f"unknown prediction variant {variant!r}")
    return exp.c1 * tau + c2 * tau * tau


def default_step_target(tau: float, coarse: bool = False) -> float:
    """Step-size target: 1e-3 max(1, tau), capped for stability on long periods."""
    if coarse:
        return COARSE_STEP
    return min(1e-3 * max(1.0, tau), STEP_CAP)


def _rk4_step(f, X, h):
    k1 = f(X)
    k2 = f(X + (0.5 * h) * k1)
    k3 = f(X + (0.5 * h) * k2)
    k4 = f(X + h * k3)
    return X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _window_plan(duration: float, h_target: float) -> tuple[int, float]:
    nsteps = max(1, math.ceil(duration / h_target))
    return nsteps, duration / nsteps


def _flow(
    sys: ControlAffineSystem,
    s: BangBangSchedule,
    X: np.ndarray,
    h_target: float,
    divergence_bound: float,
    estimate_error: bool = False,
    collect=None,
):
    """Advance a batch of states through the full schedule; optionally sample.

    ``collect`` receives (time, state_batch) after every accepted step.  The
    local error estimate is a step-doubling comparison; the full step is the
    state that advances, so the method stays classical fixed-step RK4.
    """
    X = np.asarray(X, dtype=float)
    n_steps = 0
    max_err = 0.0
    for j, (level, duration) in enumerate(zip(s.levels, s.durations)):
        f = sys.composite(level).func
        t0 = s.switch_times[j]
        nsteps, h = _window_plan(duration, h_target)
        for k in range(nsteps):
            X1 = _rk4_step(f, X, h)
            if estimate_error:
                Xh = _rk4_step(f, X, 0.5 * h)
                Xh = _rk4_step(f, Xh, 0.5 * h)
                err = float(np.max(np.abs(X1 - Xh)))
                if err > max_err:
                    max_err = err
            X = X1
            n_steps += 1
            worst = float(np.max(np.abs(X)))
            if not np.isfinite(worst) or worst > divergence_bound:
                t_fail = t0 + (k + 1) * h
                raise DivergenceError(
                    f"state norm {worst:.3e} exceeded bound {divergence_bound:.1e} at t = {t_fail:.6g}",
                    time=t_fail,
                    norm=worst,
                )
            if collect is not None:
                # pin the window's final sample to the stored switch time
                t_k = s.switch_times[j + 1] if k == nsteps - 1 else t0 + (k + 1) * h
                collect(t_k, X)
    return X, StepStats(n_steps=n_steps, max_local_error=max_err if estimate_error else float("nan"))


def integrate(
    sys: ControlAffineSystem,
    s: BangBangSchedule,
    x0,
    h_target: float | None = None,
    coarse: bool = False,
    local_error_tol: float | None = None,
    divergence_bound: float = 1e6,
) -> Trajectory:
    """Integrate the switched system over one period from x0.

    Fixed-step classical RK4 restarted exactly at each switch time, with the
    step h = duration / ceil(duration / h_target) per window.  When
    ``local_error_tol`` is set, a step-doubling estimate above it raises
    AccuracyError; otherwise the estimate is only recorded in step_stats.
    """
    x0 = np.asarray(x0, dtype=float).reshape(sys.n_states)
    if not np.all(np.isfinite(x0)):
        raise ValueError("initial state must be finite")
    if h_target is None:
        h_target = default_step_target(s.tau, coarse=coarse)
    times = [0.0]
    states = [x0.copy()]

    def collect(t, X):
        times.append(float(t))
        states.append(np.array(X, dtype=float))

    _, stats = _flow(
        sys, s, x0, h_target, divergence_bound, estimate_error=True, collect=collect
    )
    if local_error_tol is not None and stats.max_local_error > local_error_tol:
        raise AccuracyError(
            f"local error estimate {stats.max_local_error:.3e} exceeds tolerance {local_error_tol:.1e}"
        )
    return Trajectory(
        times=np.array(times),
        states=np.array(states),
        schedule=s,
        step_stats=stats,
    )


def trajectory_to_csv(traj: Trajectory) -> str:
    """CSV rows t,x1,...,xn,u1,...,um at full double precision."""
    n = traj.states.shape[1]
    m = traj.schedule.n_channels
    header = "t," + ",".join(f"x{i}" for i in range(1, n + 1)) + "," + ",".join(
        f"u{i}" for i in range(1, m + 1)
    )
    lines = [header]
    for t, x in zip(traj.times, traj.states):
        u = traj.schedule.level_at(float(t))
        cells = [format(float(t), ".17g")]
        cells += [format(float(v), ".17g") for v in x]
        cells += [format(float(v), ".17g") for v in u]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def shoot(
    sys: ControlAffineSystem,
    s: BangBangSchedule,
    x0_guess,
    tol: float = 1e-10,
    max_iter: int = 25,
    h_target: float | None = None,
    coarse: bool = False,
    divergence_bound: float = 1e6,
    fd_step: float = 1e-7,
    max_damping: int = 8,
) -> PeriodicOrbit:
    """Newton refinement of the closure map F(x0) = x(tau; x0) - x0.

    The flow-map Jacobian uses forward finite differences (step ``fd_step``)
    with all perturbed states integrated as one batch.  Steps are halved up
    to ``max_damping`` times when the residual fails to decrease.  An exact
    guess returns after verification with zero Newton iterations.
    """
    n = sys.n_states
    x0 = np.asarray(x0_guess, dtype=float).reshape(n).copy()
    if h_target is None:
        h_target = default_step_target(s.tau, coarse=coarse)

    def flow_to(X):
        return _flow(sys, s, X, h_target, divergence_bound)[0]

    res = flow_to(x0) - x0
    rnorm = float(np.linalg.norm(res))
    iterations = 0
    eye = np.eye(n)
    while rnorm > tol:
        if iterations >= max_iter:
            raise ConvergenceError(
                f"no closure after {iterations} iterations; residual {rnorm:.3e}",
                residual=rnorm,
                iterations=iterations,
            )
        batch = np.vstack([x0, x0 + fd_step * eye])
        terms = _flow(sys, s, batch, h_target, divergence_bound)[0]
        res = terms[0] - x0
        jac = (terms[1:] - terms[0]).T / fd_step - eye
        try:
            delta = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError as exc:
            raise SingularSystemError(
                "singular Newton system: the period map may have a unit eigenvalue "
                f"(closure Jacobian determinant {np.linalg.det(jac):.3e})"
            ) from exc
        rnorm = float(np.linalg.norm(res))
        scale = 1.0
        trial = x0 + delta
        trial_res = flow_to(trial) - trial
        trial_norm = float(np.linalg.norm(trial_res))
        halvings = 0
        while trial_norm >= rnorm and halvings < max_damping:
            scale *= 0.5
            halvings += 1
            trial = x0 + scale * delta
            trial_res = flow_to(trial) - trial
            trial_norm = float(np.linalg.norm(trial_res))
        x0 = trial
        rnorm = trial_norm
        iterations += 1
    traj = integrate(
        sys, s, x0, h_target=h_target, divergence_bound=divergence_bound
    )
    closure = float(np.linalg.norm(traj.terminal_state - x0))
    return PeriodicOrbit(
        x0=x0,
        tau=s.tau,
        trajectory=traj,
        closure_residual=closure,
        newton_iterations=iterations,
    )


def find_orbit_attractor(
    sys: ControlAffineSystem,
    s: BangBangSchedule,
    seed=None,
    max_prep: int = 40,
    prep_tol: float = 1e-3,
    **shoot_kwargs,
) -> PeriodicOrbit:
    """Locate an attracting orbit by iterating the period map, then shooting.

    Useful far from the small-period branch, where the quadratic prediction
    is not a workable guess: the period map of a dissipative system contracts
    toward the orbit, so a few forward periods land inside Newton's basin.
    """
    n = sys.n_states
    x = np.zeros(n) if seed is None else np.asarray(seed, dtype=float).reshape(n).copy()
    h_target = shoot_kwargs.get("h_target")
    if h_target is None:
        h_target = default_step_target(s.tau, coarse=shoot_kwargs.get("coarse", False))
    bound = shoot_kwargs.get("divergence_bound", 1e6)
    for _ in range(max_prep):
        xn = _flow(sys, s, x, h_target, bound)[0]
        gap = float(np.linalg.norm(xn - x))
        x = xn
        if gap < prep_tol:
            break
    return shoot(sys, s, x, **shoot_kwargs)


@dataclass(frozen=True)
class SweepItem:
    tau: float
    orbit: PeriodicOrbit | None
    status: str
    message: str = ""


def continuation_sweep(
    sys: ControlAffineSystem,
    family,
    tau_list,
    tol: float = 1e-10,
    coarse: bool = False,
    **shoot_kwargs,
) -> list[SweepItem]:
    """Solve a sorted ladder of periods, warm-starting each from the last.

    The first period is seeded by the quadratic branch prediction.  Items
    that fail are recorded with their error message and the sweep continues;
    a failed item does not update the warm start.
    """
    taus = [float(t) for t in tau_list]
    if any(b < a for a, b in zip(taus, taus[1:])):
        raise ValueError("tau_list must be sorted ascending")
    if not taus:
        return []
    exp = initial_state_expansion(sys, family)
    items: list[SweepItem] = []
    prev: np.ndarray | None = None
    for tau in taus:
        s = family.schedule(tau)
        guess = prev if prev is not None else predict_x0(exp, tau)
        try:
            orbit = shoot(sys, s, guess, tol=tol, coarse=coarse, **shoot_kwargs)
            status = "ok"
        except (RuntimeError, ValueError, ArithmeticError) as exc:
            try:
                orbit = find_orbit_attractor(
                    sys, s, seed=guess, tol=tol, coarse=coarse, **shoot_kwargs
                )
                status = "ok-iterated"
            except (RuntimeError, ValueError, ArithmeticError) as exc2:
                items.append(SweepItem(tau=tau, orbit=None, status="failed", message=str(exc2) or str(exc)))
                continue
        items.append(SweepItem(tau=tau, orbit=orbit, status=status))
        prev = orbit.x0
    return items
