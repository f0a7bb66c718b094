"""Shared fixtures: the reactor system, default vertex levels, random fields."""

from __future__ import annotations

import numpy as np
import pytest

from bbpc.fliess import SwitchGrid
from bbpc.lie_calculus import VectorFunction, constant_field
from bbpc.reactor_model import HYDROLYSIS, HYDROLYSIS_BOUNDS, build_cstr
from bbpc.system import ControlAffineSystem


@pytest.fixture(scope="session")
def cstr():
    return build_cstr(HYDROLYSIS)


@pytest.fixture(scope="session")
def bounds():
    return HYDROLYSIS_BOUNDS


@pytest.fixture(scope="session")
def box(bounds):
    return bounds.as_box()


def vertex_levels(N: int, bounds=HYDROLYSIS_BOUNDS) -> tuple[tuple[float, float], ...]:
    """Default box-vertex assignments, mirroring the CLI defaults."""
    a, b = bounds.u1_max, bounds.u2_max
    if N == 2:
        return ((a, b), (-a, -b))
    if N == 3:
        return ((a, b), (-a, b), (-a, -b))
    return ((a, b), (-a, b), (-a, -b), (a, -b))


def quadratic_map(A: np.ndarray, b: np.ndarray, Q: np.ndarray):
    """Vector quadratic x -> b + A x + Q[x,x], written to accept dual inputs.

    A is (2, 2), b is (2,), Q is (2, 3) holding the coefficients of
    (x1^2, x1 x2, x2^2) per output row.
    """

    def f(x):
        x1 = x[..., 0]
        x2 = x[..., 1]
        r1 = b[0] + A[0, 0] * x1 + A[0, 1] * x2 + Q[0, 0] * x1 * x1 + Q[0, 1] * x1 * x2 + Q[0, 2] * x2 * x2
        r2 = b[1] + A[1, 0] * x1 + A[1, 1] * x2 + Q[1, 0] * x1 * x1 + Q[1, 1] * x1 * x2 + Q[1, 2] * x2 * x2
        return np.stack([np.asarray(r1), np.asarray(r2)], axis=-1)

    return f


def random_quadratic_field(rng: np.random.Generator, scale: float = 0.3) -> VectorFunction:
    A = rng.uniform(-scale, scale, (2, 2))
    b = rng.uniform(-scale, scale, 2)
    Q = rng.uniform(-scale, scale, (2, 3))
    return VectorFunction(2, 2, quadratic_map(A, b, Q), exact=True)


def random_affine_system(rng: np.random.Generator, scale: float = 0.3) -> ControlAffineSystem:
    """Smooth two-state, two-channel system with a quadratic drift."""
    drift = random_quadratic_field(rng, scale)
    g1 = random_quadratic_field(rng, scale)
    g2 = random_quadratic_field(rng, scale)
    return ControlAffineSystem(drift, (g1, g2))


def linear_system(A: np.ndarray) -> ControlAffineSystem:
    """Linear drift with constant control directions; used as an exact oracle."""

    def f(x):
        x1 = x[..., 0]
        x2 = x[..., 1]
        return np.stack(
            [np.asarray(A[0, 0] * x1 + A[0, 1] * x2), np.asarray(A[1, 0] * x1 + A[1, 1] * x2)],
            axis=-1,
        )

    drift = VectorFunction(2, 2, f, exact=True)
    return ControlAffineSystem(drift, (constant_field((1.0, 0.0)), constant_field((0.0, 1.0))))


def gl2_quadrature(func, a: float, b: float) -> float:
    # two-point Gauss-Legendre: exact through cubic integrands
    h = 0.5 * (b - a)
    m = 0.5 * (a + b)
    r = h / np.sqrt(3.0)
    return h * (func(m - r) + func(m + r))


def weight_oracle_next_order(grid: SwitchGrid, i: int, inner, t: float) -> float:
    """Integral of the window-i indicator times inner(s) over [0, t].

    inner is polynomial on each window (no interior kinks), so two-point
    quadrature over the active part of window i is exact.
    """
    lo = grid.times[i - 1]
    hi = min(grid.times[i], t)
    if hi <= lo:
        return 0.0
    return gl2_quadrature(inner, lo, hi)


def random_switch_grid(rng: np.random.Generator) -> SwitchGrid:
    n = int(rng.integers(2, 7))
    tau = float(rng.uniform(0.3, 2.0))
    cuts = np.sort(rng.uniform(0.05, 0.95, n - 1)) * tau
    while np.any(np.diff(np.concatenate([[0.0], cuts, [tau]])) <= 1e-3):
        cuts = np.sort(rng.uniform(0.05, 0.95, n - 1)) * tau
    return SwitchGrid((0.0, *cuts, tau))
