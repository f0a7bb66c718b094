"""Control-affine dynamics dx/dt = f0(x) + sum_j u_j g_j(x)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .lie_calculus import DimensionMismatch, VectorFunction

__all__ = ["ControlAffineSystem"]


@dataclass(frozen=True)
class ControlAffineSystem:
    """Drift field plus linearly entering control fields.

    ``composite(level)`` returns the frozen-control field
    f = f0 + sum_j level_j g_j, which is what a bang-bang window integrates.
    When every control field is constant (the usual actuator model) the
    composite is just the drift plus a constant shift, and the returned
    ``VectorFunction`` stays cheap enough for inner integration loops.
    """

    drift: VectorFunction
    control_fields: tuple[VectorFunction, ...]
    name: str = ""

    def __post_init__(self):
        n = self.drift.dim_in
        if self.drift.dim_out != n:
            raise DimensionMismatch("drift must map R^n to R^n")
        for g in self.control_fields:
            if g.dim_in != n or g.dim_out != n:
                raise DimensionMismatch("control fields must map R^n to R^n")

    @property
    def n_states(self) -> int:
        return self.drift.dim_in

    @property
    def n_controls(self) -> int:
        return len(self.control_fields)

    def rhs(self, x, u: Sequence[float]):
        """Right-hand side at state ``x`` under control vector ``u``."""
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n_controls,):
            raise DimensionMismatch(f"expected {self.n_controls} control components, got {u.shape}")
        return self.composite(tuple(u)).func(x)

    def control_shift(self, level: Sequence[float]) -> np.ndarray | None:
        """sum_j level_j g_j as a constant vector, or None if state dependent."""
        if any(g.constant is None for g in self.control_fields):
            return None
        shift = np.zeros(self.n_states)
        for uj, g in zip(level, self.control_fields):
            shift += float(uj) * np.asarray(g.constant, dtype=float)
        return shift

    def composite(self, level: Sequence[float]) -> VectorFunction:
        """Frozen-control field f0 + sum_j level_j g_j."""
        level = tuple(float(v) for v in level)
        if len(level) != self.n_controls:
            raise DimensionMismatch(f"expected {self.n_controls} control components, got {len(level)}")
        drift_func = self.drift.func
        shift = self.control_shift(level)
        if shift is not None:

            def func(x, _d=drift_func, _s=shift):
                return _d(x) + _s

        else:
            gs = tuple(g.func for g in self.control_fields)

            def func(x, _d=drift_func, _gs=gs, _lv=level):
                out = _d(x)
                for uj, gf in zip(_lv, _gs):
                    if uj != 0.0:
                        out = out + uj * gf(x)
                return out

        exact = self.drift.exact and all(g.exact for g in self.control_fields)
        label = "f[" + ", ".join(format(v, ".6g") for v in level) + "]"
        return VectorFunction(self.n_states, self.n_states, func, exact=exact, name=label)
