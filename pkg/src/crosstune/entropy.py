"""Entropy schedule: runtime telemetry -> randomness level for the tuner.

The schedule is a softened staircase over a normalized progress coordinate
alpha. Alpha grows with completed steps and history size and shrinks with
search-space complexity (log-volume times dimensionality), so bigger spaces
hold high entropy for more wall-clock steps without the schedule itself
changing shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

# entropy below this is exploitation territory (threshold exclusive)
INFLECTION = 0.3

DEFAULT_PLATEAUS = (1.0, 0.6, 0.35, 0.15, 0.02)
DEFAULT_SOFTENING = 0.03
DEFAULT_HORIZON = 0.25


@dataclass(frozen=True)
class Telemetry:
    step_index: int
    history_len: int
    ln_volume: float
    dims: int

    def __post_init__(self) -> None:
        if self.dims < 1:
            raise ValueError("dims must be >= 1")
        if self.step_index < 0 or self.history_len < 0:
            raise ValueError("counters must be non-negative")


@dataclass(frozen=True)
class EntropySchedule:
    plateaus: tuple[float, ...] = DEFAULT_PLATEAUS
    transitions: tuple[float, ...] = (0.25, 0.5, 0.75, 1.0)
    softening: float = DEFAULT_SOFTENING
    horizon: float = DEFAULT_HORIZON

    def __post_init__(self) -> None:
        if len(self.transitions) != len(self.plateaus) - 1:
            raise ValueError("need exactly one transition between consecutive plateaus")
        if any(a <= b for a, b in zip(self.plateaus, self.plateaus[1:])):
            raise ValueError("plateaus must be strictly descending")
        if any(a >= b for a, b in zip(self.transitions, self.transitions[1:])):
            raise ValueError("transitions must be strictly ascending")
        if self.softening <= 0 or self.horizon <= 0:
            raise ValueError("softening and horizon must be > 0")
        if not 0 < self.plateaus[-1] < 1:
            raise ValueError("h_min must lie in (0, 1)")

    @property
    def h_min(self) -> float:
        return self.plateaus[-1]


def make_schedule(ln_volume: float, dims: int, **overrides) -> EntropySchedule:
    """Build the default schedule. Shape is input-independent by design: the
    complexity inputs position the phases via alpha's normalization instead,
    with transitions evenly spaced so the last one lands at alpha = 1."""
    if dims < 1:
        raise ValueError("dims must be >= 1")
    plateaus = overrides.pop("plateaus", DEFAULT_PLATEAUS)
    n_steps = len(plateaus) - 1
    transitions = overrides.pop(
        "transitions", tuple((j + 1) / n_steps for j in range(n_steps))
    )
    return EntropySchedule(plateaus=tuple(plateaus), transitions=tuple(transitions), **overrides)


def alpha(t: Telemetry, sched: EntropySchedule) -> float:
    """Progress coordinate: (steps + history) over the complexity-scaled horizon."""
    return (t.step_index + t.history_len) / (
        2.0 * sched.horizon * max(t.ln_volume, 1.0) * t.dims
    )


def _logistic(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def entropy(a: float, sched: EntropySchedule) -> float:
    """Softened staircase: each transition contributes a logistic step down."""
    levels = sched.plateaus
    h = levels[-1]
    for j, tau in enumerate(sched.transitions):
        h += (levels[j] - levels[j + 1]) * _logistic((tau - a) / sched.softening)
    return min(max(h, sched.h_min), 1.0)


def is_exploitation(h: float) -> bool:
    return h < INFLECTION
