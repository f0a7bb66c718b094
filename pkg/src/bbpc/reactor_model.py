"""Non-isothermal CSTR model in dimensionless deviation coordinates.

State x1 is relative concentration deviation, x2 relative temperature
deviation, both measured from the nominal operating point, so the origin is
an equilibrium of the uncontrolled dynamics by construction.  Controls act
additively: u1 shifts the concentration balance, u2 the heat balance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .lie_calculus import VectorFunction, constant_field, jacobian
from .schedule import ControlBox
from .system import ControlAffineSystem

__all__ = [
    "DomainError",
    "ReactionParameters",
    "PhysicalParameters",
    "ControlBounds",
    "HYDROLYSIS",
    "HYDROLYSIS_BOUNDS",
    "HYDROLYSIS_PHYSICAL",
    "build_cstr",
    "dimensionless_from_physical",
    "discriminant_D",
    "constant_control_equilibria",
    "load_model",
]


class DomainError(ValueError):
    """State left the region where the model formulas are defined."""


@dataclass(frozen=True)
class ReactionParameters:
    """Dimensionless CSTR parameter group.

    kappa: activation group (activation energy over gas constant times
        nominal temperature);
    k1, k2: concentration and temperature rate groups (k2 < 0 for an
        exothermic reaction);
    phi1, phi2: flow ratios;
    n_bar: reaction order.
    """

    kappa: float
    k1: float
    k2: float
    phi1: float
    phi2: float
    n_bar: float = 1.0

    def __post_init__(self):
        for nm in ("kappa", "k1", "k2", "phi1", "phi2", "n_bar"):
            object.__setattr__(self, nm, float(getattr(self, nm)))
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if not (self.phi1 > 0 and self.phi2 > 0):
            raise ValueError("flow ratios phi1, phi2 must be positive")
        if not self.n_bar >= 1:
            raise ValueError(f"reaction order n_bar must be >= 1, got {self.n_bar}")

    @property
    def k1_tilde(self) -> float:
        return self.k1 * math.exp(-self.kappa)

    @property
    def k2_tilde(self) -> float:
        return self.k2 * math.exp(-self.kappa)


@dataclass(frozen=True)
class PhysicalParameters:
    """Physical constants of the reactor in the units noted per field."""

    activation_energy: float          # kJ/mol
    collision_factor: float           # 1/s
    reaction_heat: float              # kJ/mol, negative = exothermic
    density_heat_capacity: float      # kJ/(K*l)
    volume: float                     # l
    flow_rate: float                  # l/s
    steady_flow_rate: float           # l/s
    steady_outlet_concentration: float  # mol/l
    steady_temperature: float         # K
    steady_inlet_concentration: float   # mol/l
    steady_inlet_temperature: float   # K
    gas_constant: float = 8.3144598   # J/(K*mol)

    def __post_init__(self):
        for nm in self.__dataclass_fields__:
            object.__setattr__(self, nm, float(getattr(self, nm)))
        for nm in self.__dataclass_fields__:
            if nm == "reaction_heat":
                continue
            if not getattr(self, nm) > 0:
                raise ValueError(f"{nm} must be strictly positive, got {getattr(self, nm)}")


@dataclass(frozen=True)
class ControlBounds:
    """Symmetric admissible box: |u1| <= u1_max, |u2| <= u2_max.

    Zero amplitudes are allowed so degenerate (no-modulation) conversions
    can still be represented; schedule builders reject them downstream.
    """

    u1_max: float
    u2_max: float

    def __post_init__(self):
        object.__setattr__(self, "u1_max", float(self.u1_max))
        object.__setattr__(self, "u2_max", float(self.u2_max))
        if self.u1_max < 0 or self.u2_max < 0:
            raise ValueError("control bounds must be nonnegative")

    def as_box(self) -> ControlBox:
        return ControlBox.symmetric((self.u1_max, self.u2_max))


HYDROLYSIS = ReactionParameters(
    kappa=17.77,
    k1=5.819e7,
    k2=-8.99e5,
    phi1=1.0,
    phi2=1.0,
    n_bar=1.0,
)

HYDROLYSIS_BOUNDS = ControlBounds(u1_max=1.798, u2_max=0.06663)

HYDROLYSIS_PHYSICAL = PhysicalParameters(
    activation_energy=44.35,
    collision_factor=1.4e5,
    reaction_heat=-55.5,
    density_heat_capacity=4.186,
    volume=0.298,
    flow_rate=7.17e-4,
    steady_flow_rate=7.17e-4,
    steady_outlet_concentration=0.3498,
    steady_temperature=300.17,
    steady_inlet_concentration=0.74,
    steady_inlet_temperature=295.0,
)


def _integer_power(base, exponent: int):
    # exponentiation by squaring; keeps dual arithmetic exact for integer order
    result = None
    acc = base
    e = exponent
    while e > 0:
        if e & 1:
            result = acc if result is None else result * acc
        acc = acc * acc
        e >>= 1
    if result is None:
        return base * 0.0 + 1.0
    return result


def build_cstr(p: ReactionParameters) -> ControlAffineSystem:
    """Two-state reactor system with additive controls on both balances.

    The drift vanishes at the origin identically: the constant production
    terms are computed from the same exponential as the state-dependent
    reaction term, so the cancellation at x = 0 is exact in floating point.
    """
    base = float(np.exp(-p.kappa))
    c1 = p.k1 * base
    c2 = p.k2 * base
    n_int = int(p.n_bar) if float(p.n_bar).is_integer() else None

    def drift(x):
        x1 = x[..., 0]
        x2 = x[..., 1]
        # dual inputs compare by value component, so this guard is uniform
        if np.any(x2 <= -1.0):
            raise DomainError("reactor temperature coordinate reached x2 <= -1 where the rate law is undefined")
        shifted = x1 + 1.0
        if n_int is not None:
            conc = _integer_power(shifted, n_int)
        else:
            if np.any(x1 <= -1.0):
                raise DomainError("non-integer reaction order requires x1 > -1")
            conc = np.exp(p.n_bar * np.log(shifted))
        rate = conc * np.exp(-p.kappa / (x2 + 1.0))
        r1 = c1 - p.phi1 * x1 - p.k1 * rate
        r2 = c2 - p.phi2 * x2 - p.k2 * rate
        return np.stack([np.asarray(r1), np.asarray(r2)], axis=-1)

    f0 = VectorFunction(2, 2, drift, exact=True, name="cstr_drift")
    g1 = constant_field((1.0, 0.0))
    g2 = constant_field((0.0, 1.0))
    return ControlAffineSystem(f0, (g1, g2), name="cstr")


def dimensionless_from_physical(
    p: PhysicalParameters,
    n_bar: float = 1.0,
    concentration_modulation: float = 0.85,
    temperature_modulation: float = 20.0,
) -> tuple[ReactionParameters, ControlBounds]:
    """Dimensionless parameter group plus symmetric control bounds.

    The bounds come from modulating the inlet concentration by the given
    relative fraction and the inlet temperature by the given absolute range
    in kelvin.  Symmetric bounds require flow_rate == steady_flow_rate;
    otherwise the admissible control interval picks up a constant offset
    that a symmetric box cannot represent.
    """
    kappa = p.activation_energy * 1000.0 / (p.gas_constant * p.steady_temperature)
    k1 = p.collision_factor * p.steady_outlet_concentration ** (n_bar - 1.0) * p.volume / p.steady_flow_rate
    k2 = (
        p.reaction_heat
        * p.collision_factor
        * p.steady_outlet_concentration ** n_bar
        * p.volume
        / (p.density_heat_capacity * p.steady_temperature * p.steady_flow_rate)
    )
    phi = p.flow_rate / p.steady_flow_rate
    params = ReactionParameters(kappa=kappa, k1=k1, k2=k2, phi1=phi, phi2=phi, n_bar=n_bar)
    if p.flow_rate != p.steady_flow_rate:
        raise ValueError(
            "symmetric control bounds require flow_rate == steady_flow_rate; "
            "the flow-offset term shifts the admissible interval asymmetrically"
        )
    if concentration_modulation < 0 or temperature_modulation < 0:
        raise ValueError("modulation ranges must be nonnegative")
    u1 = (1.0 + params.k1_tilde) * phi * concentration_modulation
    u2 = (1.0 + params.k2_tilde) * phi * temperature_modulation / p.steady_inlet_temperature
    return params, ControlBounds(u1_max=u1, u2_max=u2)


def discriminant_D(p: ReactionParameters) -> float:
    """Quadratic discriminant separating node-type from focus-type linearization.

    A positive value certifies real eigenvalues of the origin Jacobian, which
    caps the number of sign changes an optimal bang-bang input needs.
    """
    kt1 = p.k1_tilde
    kt2 = p.k2_tilde
    s = p.phi1 + p.phi2 + p.n_bar * kt1 + p.kappa * kt2
    return s * s - 4.0 * (p.phi1 * p.phi2 + p.phi1 * p.kappa * kt2 + p.n_bar * p.phi2 * kt1)


def constant_control_equilibria(
    sys: ControlAffineSystem,
    u,
    grid_extent: float = 0.9,
    grid_points: int = 21,
    tol: float = 1e-10,
    max_iter: int = 60,
    dedupe_tol: float = 1e-8,
) -> list[np.ndarray]:
    """All steady states of the frozen-control dynamics found from a start grid.

    Runs damped-free Newton iteration from a uniform grid of starting points,
    discards runs that diverge or leave the model domain, deduplicates the
    survivors, and returns them sorted by coordinates.  The list can be empty.
    """
    field = sys.composite(tuple(float(v) for v in u))
    n = sys.n_states
    axes = np.linspace(-grid_extent, grid_extent, grid_points)
    starts = np.stack(np.meshgrid(*([axes] * n), indexing="ij"), axis=-1).reshape(-1, n)
    roots: list[np.ndarray] = []
    for start in starts:
        x = np.array(start, dtype=float)
        ok = False
        for _ in range(max_iter):
            try:
                r = field(x)
                if np.linalg.norm(r) <= tol:
                    ok = True
                    break
                J = jacobian(field, x)
            except DomainError:
                break
            try:
                step = np.linalg.solve(J, r)
            except np.linalg.LinAlgError:
                break
            x = x - step
            if not np.all(np.isfinite(x)) or np.linalg.norm(x) > 25.0:
                break
        if not ok:
            continue
        if any(np.linalg.norm(x - r0) <= dedupe_tol for r0 in roots):
            continue
        roots.append(x)
    roots.sort(key=lambda r: tuple(r))
    return roots


_REACTION_KEYS = ("kappa", "k1", "k2", "phi1", "phi2", "n_bar")
_BOUND_KEYS = ("u1_max", "u2_max")


def load_model(source: str | Path) -> tuple[ReactionParameters, ControlBounds]:
    """Model from the built-in preset name or a key-value configuration file.

    File format: one ``key = value`` per line, ``#`` starts a comment,
    blank lines ignored.  Required keys: kappa, k1, k2, phi1, phi2, n_bar,
    u1_max, u2_max.
    """
    if isinstance(source, str) and source.lower() == "hydrolysis":
        return HYDROLYSIS, HYDROLYSIS_BOUNDS
    path = Path(source)
    if not path.exists():
        raise FileNotFoundError(f"unknown preset or missing config file: {source!r} (built-in preset: 'hydrolysis')")
    values: dict[str, float] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        try:
            values[key] = float(val.strip())
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: cannot parse value for {key!r}: {val.strip()!r}") from exc
    missing = [k for k in _REACTION_KEYS + _BOUND_KEYS if k not in values]
    if missing:
        raise ValueError(f"{path}: missing required keys: {', '.join(missing)}")
    unknown = [k for k in values if k not in _REACTION_KEYS + _BOUND_KEYS]
    if unknown:
        raise ValueError(f"{path}: unknown keys: {', '.join(unknown)}")
    params = ReactionParameters(**{k: values[k] for k in _REACTION_KEYS})
    bounds = ControlBounds(**{k: values[k] for k in _BOUND_KEYS})
    return params, bounds
