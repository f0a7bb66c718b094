"""Periodic bang-bang schedule design for isoperimetric control-affine systems.

The package designs piecewise-constant periodic inputs whose window structure
comes from zero-mean switching constructions, predicts the matching periodic
initial state and cost from truncated series expansions, verifies the orbit by
Newton shooting over the exact switched flow, and compares time-average
performance against steady operation.  The built-in model is a non-isothermal
continuous stirred-tank reactor with flow-rate and inlet-temperature inputs.
"""

from .cost_analysis import (
    CostReport,
    cbar_grid,
    cbar_polynomial,
    cost_exact,
    cost_report_from_json,
    cost_report_to_json,
    estimate_J2,
    estimate_J4,
    leading_coefficient_cstar,
)
from .fliess import (
    ExpansionResult,
    SwitchGrid,
    average_state_expansion,
    periodicity_residual,
    terminal_state_expansion,
)
from .lie_calculus import (
    DimensionMismatch,
    NonFiniteValue,
    VectorFunction,
    constant_field,
    directional_derivative,
    jacobian,
    lie_derivative,
    lie_derivative2,
    second_directional_derivative,
)
from .periodic_solver import (
    AccuracyError,
    ConvergenceError,
    DivergenceError,
    FourLevelFamily,
    InitialStateExpansion,
    PeriodicOrbit,
    SingularSystemError,
    SweepItem,
    Trajectory,
    TwoLevelFamily,
    continuation_sweep,
    find_orbit_attractor,
    initial_state_expansion,
    integrate,
    predict_x0,
    shoot,
    trajectory_to_csv,
)
from .reactor_model import (
    HYDROLYSIS,
    HYDROLYSIS_BOUNDS,
    ControlBounds,
    ReactionParameters,
    build_cstr,
    constant_control_equilibria,
    discriminant_D,
    load_model,
)
from .schedule import (
    BangBangSchedule,
    ControlBox,
    InfeasiblePartition,
    IsoperimetricTarget,
    build_schedule,
    corollary_schedule_N2,
    corollary_schedule_N3,
    corollary_schedule_N4,
    isoperimetric_residual,
    schedule_from_json,
    schedule_to_json,
)
from .system import ControlAffineSystem

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "AccuracyError",
    "BangBangSchedule",
    "ControlAffineSystem",
    "ControlBounds",
    "ControlBox",
    "ConvergenceError",
    "CostReport",
    "DimensionMismatch",
    "DivergenceError",
    "ExpansionResult",
    "FourLevelFamily",
    "HYDROLYSIS",
    "HYDROLYSIS_BOUNDS",
    "InfeasiblePartition",
    "InitialStateExpansion",
    "IsoperimetricTarget",
    "NonFiniteValue",
    "PeriodicOrbit",
    "ReactionParameters",
    "SingularSystemError",
    "SweepItem",
    "SwitchGrid",
    "Trajectory",
    "TwoLevelFamily",
    "VectorFunction",
    "average_state_expansion",
    "build_cstr",
    "build_schedule",
    "cbar_grid",
    "cbar_polynomial",
    "constant_control_equilibria",
    "constant_field",
    "continuation_sweep",
    "corollary_schedule_N2",
    "corollary_schedule_N3",
    "corollary_schedule_N4",
    "cost_exact",
    "cost_report_from_json",
    "cost_report_to_json",
    "directional_derivative",
    "discriminant_D",
    "estimate_J2",
    "estimate_J4",
    "find_orbit_attractor",
    "initial_state_expansion",
    "integrate",
    "isoperimetric_residual",
    "jacobian",
    "leading_coefficient_cstar",
    "lie_derivative",
    "lie_derivative2",
    "load_model",
    "periodicity_residual",
    "predict_x0",
    "schedule_from_json",
    "schedule_to_json",
    "second_directional_derivative",
    "shoot",
    "terminal_state_expansion",
    "trajectory_to_csv",
]
