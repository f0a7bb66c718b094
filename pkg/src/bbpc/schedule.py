"""Bang-bang control schedules and isoperimetric bookkeeping.

A schedule is a finite sequence of control levels held over consecutive
windows that partition one period.  Window lengths are parametrized by the
fractions alpha_j = tau_j / tau for j >= 2, with the first window absorbing
the remainder; storing durations that way keeps the switch grid exactly
closed (the last switch time is the period, not a rounded sum).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "InfeasiblePartition",
    "ControlBox",
    "BangBangSchedule",
    "IsoperimetricTarget",
    "build_schedule",
    "isoperimetric_residual",
    "corollary_schedule_N2",
    "corollary_schedule_N3",
    "corollary_schedule_N4",
    "schedule_to_json",
    "schedule_from_json",
]


class InfeasiblePartition(ValueError):
    """The requested window fractions do not form a valid partition."""


def _g17(v: float) -> str:
    return format(float(v), ".17g")


@dataclass(frozen=True)
class ControlBox:
    """Axis-aligned box of admissible control values."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if len(lo) != len(hi):
            raise ValueError("lower and upper must have the same length")
        if any(a > b for a, b in zip(lo, hi)):
            raise ValueError("control box requires lower_i <= upper_i")

    @classmethod
    def symmetric(cls, amplitudes: Sequence[float]) -> "ControlBox":
        amp = tuple(float(a) for a in amplitudes)
        if any(a < 0 for a in amp):
            raise ValueError("symmetric box needs nonnegative amplitudes")
        return cls(tuple(-a for a in amp), amp)

    @property
    def m(self) -> int:
        return len(self.lower)

    def contains(self, u: Sequence[float], tol: float = 0.0) -> bool:
        return all(lo - tol <= v <= hi + tol for v, lo, hi in zip(u, self.lower, self.upper))

    def is_vertex(self, u: Sequence[float], tol: float = 0.0) -> bool:
        return all(abs(v - lo) <= tol or abs(v - hi) <= tol for v, lo, hi in zip(u, self.lower, self.upper))

    def vertices(self) -> list[tuple[float, ...]]:
        verts = [()]
        for lo, hi in zip(self.lower, self.upper):
            verts = [v + (c,) for v in verts for c in ((lo, hi) if lo != hi else (lo,))]
        return verts


@dataclass(frozen=True)
class BangBangSchedule:
    """Piecewise-constant control: level j held on the j-th window.

    ``durations`` always satisfies sum(durations) == tau exactly because the
    last entry is recomputed as the remainder on construction.
    """

    levels: tuple[tuple[float, ...], ...]
    durations: tuple[float, ...]
    tau: float
    mode: str = "free"

    def __post_init__(self):
        levels = tuple(tuple(float(v) for v in lv) for lv in self.levels)
        object.__setattr__(self, "levels", levels)
        tau = float(self.tau)
        object.__setattr__(self, "tau", tau)
        if not (tau > 0 and math.isfinite(tau)):
            raise InfeasiblePartition(f"period must be positive and finite, got {tau}")
        if len(levels) < 1:
            raise InfeasiblePartition("at least one control level is required")
        if len({len(lv) for lv in levels}) > 1:
            raise ValueError("all levels must have the same number of channels")
        durs = [float(d) for d in self.durations]
        if len(durs) != len(levels):
            raise InfeasiblePartition("need exactly one duration per level")
        head = durs[:-1]
        last = tau - math.fsum(head)
        durs = head + [last]
        if any(not (d > 0 and math.isfinite(d)) for d in durs):
            raise InfeasiblePartition(f"all window durations must be positive, got {tuple(durs)}")
        object.__setattr__(self, "durations", tuple(durs))
        if self.mode not in ("free", "vertex"):
            raise ValueError(f"unknown schedule mode {self.mode!r}")

    @property
    def N(self) -> int:
        return len(self.levels)

    @property
    def n_channels(self) -> int:
        return len(self.levels[0])

    @property
    def switch_times(self) -> tuple[float, ...]:
        # cumulative sums of the stored durations, with the endpoint pinned
        times = [0.0]
        acc = 0.0
        for d in self.durations:
            acc += d
            times.append(acc)
        times[-1] = self.tau
        return tuple(times)

    @property
    def alphas(self) -> tuple[float, ...]:
        """Window fractions alpha_2 .. alpha_N (the first window is derived)."""
        return tuple(d / self.tau for d in self.durations[1:])

    def level_at(self, t: float) -> tuple[float, ...]:
        """Control vector active at time t (right-continuous; level N at t=tau)."""
        if not 0.0 <= t <= self.tau:
            raise ValueError(f"time {t} outside [0, {self.tau}]")
        times = self.switch_times
        for j in range(self.N):
            if t < times[j + 1]:
                return self.levels[j]
        return self.levels[-1]

    def mean_control(self, channel: int) -> float:
        """Time average of one control channel over the period (1-based index)."""
        if not 1 <= channel <= self.n_channels:
            raise ValueError(f"channel {channel} outside 1..{self.n_channels}")
        total = math.fsum(d * lv[channel - 1] for d, lv in zip(self.durations, self.levels))
        return total / self.tau


@dataclass(frozen=True)
class IsoperimetricTarget:
    """Required time average for one control channel."""

    channel: int
    mean_value: float

    def __post_init__(self):
        if self.channel < 1:
            raise ValueError("channels are 1-based")


def build_schedule(
    levels: Sequence[Sequence[float]],
    alphas: Sequence[float],
    tau: float,
    mode: str = "free",
    box: ControlBox | None = None,
) -> BangBangSchedule:
    """Schedule with durations tau_1 = (1 - sum alphas) tau, tau_j = alpha_j tau.

    ``alphas`` lists the fractions of windows 2..N; their sum must stay
    below 1 so the first window keeps positive length.
    """
    alphas = [float(a) for a in alphas]
    if len(levels) != len(alphas) + 1:
        raise InfeasiblePartition(f"{len(levels)} levels need {len(levels) - 1} alpha values, got {len(alphas)}")
    if any(a <= 0.0 for a in alphas):
        raise InfeasiblePartition("every alpha_j must be strictly positive")
    s = math.fsum(alphas)
    if s >= 1.0:
        raise InfeasiblePartition(f"sum of alphas must stay below 1, got {s}")
    tau = float(tau)
    durations = [(1.0 - s) * tau] + [a * tau for a in alphas]
    sched = BangBangSchedule(tuple(tuple(lv) for lv in levels), tuple(durations), tau, mode=mode)
    if box is not None:
        for lv in sched.levels:
            if not box.contains(lv, tol=1e-12):
                raise ValueError(f"level {lv} outside the control box")
            if mode == "vertex" and not box.is_vertex(lv, tol=1e-12):
                raise ValueError(f"level {lv} is not a vertex of the control box")
    return sched


def isoperimetric_residual(s: BangBangSchedule, target: IsoperimetricTarget) -> float:
    """Signed defect sum_j tau_j u^j_channel - tau * mean_value (0 means satisfied)."""
    if target.channel > s.n_channels:
        raise ValueError(f"channel {target.channel} outside 1..{s.n_channels}")
    acc = math.fsum(d * lv[target.channel - 1] for d, lv in zip(s.durations, s.levels))
    return acc - s.tau * target.mean_value


def corollary_schedule_N2(u1: Sequence[float], tau: float, box: ControlBox | None = None) -> BangBangSchedule:
    """Two levels (u1, -u1) on equal half-period windows.

    This is the unique two-window pattern with zero mean in every channel;
    it needs a nonzero first channel so the construction is not degenerate.
    """
    u1 = tuple(float(v) for v in u1)
    if u1[0] == 0.0:
        raise ValueError("first channel of u1 must be nonzero")
    u2 = tuple(-v for v in u1)
    return build_schedule([u1, u2], [0.5], tau, mode="vertex" if box and box.is_vertex(u1) else "free", box=box)


def corollary_schedule_N3(
    levels: Sequence[Sequence[float]],
    alpha2: float,
    tau: float,
    box: ControlBox | None = None,
) -> BangBangSchedule:
    """Three windows with durations (tau/2, alpha2 tau, (1/2 - alpha2) tau).

    Requires the channel-1 sign pattern u1_1 = -u2_1 = -u3_1 != 0, which is
    what makes the channel-1 average vanish for every alpha2 in (0, 1/2).
    """
    levels = [tuple(float(v) for v in lv) for lv in levels]
    if len(levels) != 3:
        raise ValueError("exactly three levels required")
    a, b, c = (lv[0] for lv in levels)
    if a == 0.0 or b != -a or c != -a:
        raise ValueError("channel-1 entries must follow the pattern (a, -a, -a) with a != 0")
    alpha2 = float(alpha2)
    if not 0.0 < alpha2 < 0.5:
        raise InfeasiblePartition(f"alpha2 must lie in the open interval (0, 1/2), got {alpha2}")
    return build_schedule(levels, [alpha2, 0.5 - alpha2], tau, box=box)


def corollary_schedule_N4(
    levels: Sequence[Sequence[float]],
    alpha2: float,
    alpha4: float,
    tau: float,
    box: ControlBox | None = None,
) -> BangBangSchedule:
    """Four windows with durations ((1/2 - alpha4) tau, alpha2 tau, (1/2 - alpha2) tau, alpha4 tau).

    Requires the channel-1 sign pattern u1_1 = -u2_1 = -u3_1 = u4_1 != 0.
    The channel-1 average is zero for every admissible (alpha2, alpha4); other
    channels generally average to zero only when alpha2 == alpha4.
    """
    levels = [tuple(float(v) for v in lv) for lv in levels]
    if len(levels) != 4:
        raise ValueError("exactly four levels required")
    a, b, c, d = (lv[0] for lv in levels)
    if a == 0.0 or b != -a or c != -a or d != a:
        raise ValueError("channel-1 entries must follow the pattern (a, -a, -a, a) with a != 0")
    alpha2 = float(alpha2)
    alpha4 = float(alpha4)
    for nm, al in (("alpha2", alpha2), ("alpha4", alpha4)):
        if not 0.0 < al < 0.5:
            raise InfeasiblePartition(f"{nm} must lie in the open interval (0, 1/2), got {al}")
    return build_schedule(levels, [alpha2, 0.5 - alpha2, alpha4], tau, box=box)


def schedule_to_json(s: BangBangSchedule) -> str:
    """Serialize with 17 significant digits so float64 values round-trip."""
    levels = ", ".join("[" + ", ".join(_g17(v) for v in lv) + "]" for lv in s.levels)
    alphas = ", ".join(_g17(a) for a in s.alphas)
    return (
        "{"
        + f'"levels": [{levels}], "alphas": [{alphas}], "tau": {_g17(s.tau)}, "mode": {json.dumps(s.mode)}'
        + "}"
    )


def schedule_from_json(text: str) -> BangBangSchedule:
    doc = json.loads(text)
    return build_schedule(doc["levels"], doc["alphas"], doc["tau"], mode=doc.get("mode", "free"))
