"""Shared domain types: parameter grids, configurations, metrics, and state records.

Every tunable parameter is modeled as a bounded integer grid (min, max, step),
so a configuration is just a map of grid indices. Categorical parameters are
expected to be pre-encoded by their agent as enumerated grids (min=0, step=1).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping

# search_volume saturates here; ln_volume stays exact in log-space
VOLUME_CEILING = 10**18

_GRID_EPS = 1e-9


class Changeability(str, Enum):
    ONLINE = "online"
    OFFLINE = "offline"


class Direction(str, Enum):
    MAXIMIZE = "maximize"
    MINIMIZE = "minimize"
    AUXILIARY = "auxiliary"


class ValidationError(ValueError):
    """A declared spec or payload violates a structural invariant."""


def round_half_up(x: float) -> int:
    """Round to nearest integer, ties away from the floor (0.5 -> 1, 1.5 -> 2)."""
    return math.floor(x + 0.5)


def canonical_json(payload: Any) -> str:
    """Canonical wire form: sorted keys, compact separators, no NaN."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=False)


@dataclass(frozen=True)
class ParameterSpec:
    """One tunable knob: a bounded numeric grid owned by a runtime layer."""

    name: str
    layer: str
    min: float
    max: float
    step: float
    changeability: Changeability = Changeability.ONLINE

    def __post_init__(self) -> None:
        if not self.name:
            raise ValidationError("parameter name must be non-empty")
        for label, v in (("min", self.min), ("max", self.max), ("step", self.step)):
            if not math.isfinite(v):
                raise ValidationError(f"parameter {self.name}: {label} must be finite")
        if self.step <= 0:
            raise ValidationError(f"parameter {self.name}: step must be > 0")
        if self.min > self.max:
            raise ValidationError(f"parameter {self.name}: min must be <= max")

    @property
    def n_values(self) -> int:
        # epsilon absorbs float error when (max - min) is an exact multiple of step
        return int(math.floor((self.max - self.min) / self.step + _GRID_EPS)) + 1

    def grid_index(self, value: float) -> int:
        """Nearest grid index for a real value; out-of-range input is clamped."""
        clamped = min(max(value, self.min), self.max)
        idx = round_half_up((clamped - self.min) / self.step)
        return min(max(idx, 0), self.n_values - 1)

    def grid_value(self, index: int) -> float:
        """Real value at a grid index."""
        if not 0 <= index <= self.n_values - 1:
            raise IndexError(
                f"parameter {self.name}: index {index} outside [0, {self.n_values - 1}]"
            )
        return self.min + index * self.step

    def to_wire(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "layer": self.layer,
            "min": self.min,
            "max": self.max,
            "step": self.step,
            "changeability": self.changeability.value,
        }

    @classmethod
    def from_wire(cls, data: Mapping[str, Any]) -> "ParameterSpec":
        return cls(
            name=data["name"],
            layer=data.get("layer", ""),
            min=float(data["min"]),
            max=float(data["max"]),
            step=float(data["step"]),
            changeability=Changeability(data.get("changeability", "online")),
        )


# spec-style free functions mirroring the ParameterSpec methods
def grid_index(spec: ParameterSpec, value: float) -> int:
    return spec.grid_index(value)


def grid_value(spec: ParameterSpec, index: int) -> float:
    return spec.grid_value(index)


@dataclass(frozen=True)
class SearchSpace:
    """Ordered collection of parameter specs; the genome layout for the tuner."""

    params: tuple[ParameterSpec, ...]

    def __post_init__(self) -> None:
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ValidationError(f"duplicate parameter names: {dupes}")

    @property
    def dims(self) -> int:
        return len(self.params)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.params)

    def spec(self, name: str) -> ParameterSpec:
        for p in self.params:
            if p.name == name:
                return p
        raise KeyError(name)

    @property
    def volume(self) -> int:
        """Number of grid points, saturating at VOLUME_CEILING."""
        total = 1
        for p in self.params:
            total *= p.n_values
            if total >= VOLUME_CEILING:
                return VOLUME_CEILING
        return total

    @property
    def ln_volume(self) -> float:
        """Exact log of the grid-point count (safe for volumes past the ceiling)."""
        return sum(math.log(p.n_values) for p in self.params)

    def extended(self, more: Iterable[ParameterSpec]) -> "SearchSpace":
        return SearchSpace(self.params + tuple(more))


def search_volume(space: SearchSpace) -> int:
    return space.volume


@dataclass(eq=False)
class Configuration:
    """Full grid-index assignment; the genetic algorithm's genome.

    Equality is index-wise over the genes only: the epoch is publication
    bookkeeping, not part of the configuration's identity.
    """

    genes: dict[str, int]
    epoch: int = 0

    def __post_init__(self) -> None:
        if self.epoch < 0:
            raise ValidationError("epoch must be non-negative")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Configuration):
            return NotImplemented
        return self.genes == other.genes

    def __hash__(self) -> int:
        return hash(frozenset(self.genes.items()))

    def check_against(self, space: SearchSpace) -> None:
        for p in space.params:
            if p.name not in self.genes:
                raise ValidationError(f"missing gene for parameter {p.name}")
            idx = self.genes[p.name]
            if not 0 <= idx <= p.n_values - 1:
                raise ValidationError(f"gene {p.name}={idx} outside [0, {p.n_values - 1}]")
        unknown = set(self.genes) - set(space.names)
        if unknown:
            raise ValidationError(f"genes for unknown parameters: {sorted(unknown)}")

    def values(self, space: SearchSpace) -> dict[str, float]:
        """Reconstruct real parameter values from grid indices."""
        return {p.name: p.grid_value(self.genes[p.name]) for p in space.params}

    def replace_epoch(self, epoch: int) -> "Configuration":
        return Configuration(genes=dict(self.genes), epoch=epoch)

    def to_wire(self) -> dict[str, Any]:
        return {"genes": dict(self.genes), "epoch": self.epoch}

    @classmethod
    def from_wire(cls, data: Mapping[str, Any]) -> "Configuration":
        return cls(genes={k: int(v) for k, v in data["genes"].items()}, epoch=int(data["epoch"]))


@dataclass(frozen=True)
class TuningDirective:
    """How one metric participates in scoring: direction, thresholds, weight."""

    direction: Direction
    lower_threshold: float | None = None
    upper_threshold: float | None = None
    weight: float = 1.0

    def __post_init__(self) -> None:
        if self.direction is Direction.AUXILIARY:
            if self.lower_threshold is not None or self.upper_threshold is not None:
                raise ValidationError("auxiliary metrics carry no thresholds")
            return
        if self.weight <= 0:
            raise ValidationError("weight must be > 0")
        if (
            self.lower_threshold is not None
            and self.upper_threshold is not None
            and self.lower_threshold > self.upper_threshold
        ):
            raise ValidationError("lower_threshold must be <= upper_threshold")

    @property
    def is_tuning(self) -> bool:
        return self.direction is not Direction.AUXILIARY

    def to_wire(self) -> dict[str, Any]:
        out: dict[str, Any] = {"direction": self.direction.value}
        if self.direction is Direction.AUXILIARY:
            return out
        if self.lower_threshold is not None:
            out["lower_threshold"] = self.lower_threshold
        if self.upper_threshold is not None:
            out["upper_threshold"] = self.upper_threshold
        out["weight"] = self.weight
        return out

    @classmethod
    def from_wire(cls, data: Mapping[str, Any]) -> "TuningDirective":
        direction = Direction(data["direction"])
        if direction is Direction.AUXILIARY:
            return cls(direction=direction)
        return cls(
            direction=direction,
            lower_threshold=data.get("lower_threshold"),
            upper_threshold=data.get("upper_threshold"),
            weight=float(data.get("weight", 1.0)),
        )


@dataclass(frozen=True)
class MetricSample:
    """One observed metric value plus its tuning labels."""

    name: str
    value: float
    directive: TuningDirective
    labels: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        if not math.isfinite(self.value):
            raise ValidationError(f"metric {self.name}: value must be finite")


@dataclass(frozen=True)
class SystemState:
    """One complete observation: every registered metric at one configuration."""

    metrics: tuple[MetricSample, ...]
    config: Configuration
    timestamp: float

    def metric_map(self) -> dict[str, float]:
        return {m.name: m.value for m in self.metrics}


@dataclass(frozen=True)
class Snapshot:
    """Per-metric median over a window of complete states at one epoch."""

    metrics: dict[str, float]
    config: Configuration
    window: int = 1

    def __post_init__(self) -> None:
        if self.window < 1:
            raise ValidationError("window must be >= 1")

    def to_wire(self) -> dict[str, Any]:
        return {
            "metrics": dict(self.metrics),
            "config": self.config.to_wire(),
            "window": self.window,
        }

    @classmethod
    def from_wire(cls, data: Mapping[str, Any]) -> "Snapshot":
        return cls(
            metrics={k: float(v) for k, v in data["metrics"].items()},
            config=Configuration.from_wire(data["config"]),
            window=int(data["window"]),
        )


@dataclass
class StateRecord:
    """One evaluated configuration with its running-mean score.

    Re-evaluations of the same configuration merge into the record: every
    evaluation's snapshot is kept so scores can be recomputed under fresh
    metric bounds, and ``score`` stays the mean of the per-snapshot scores.
    """

    snapshots: list[Snapshot]
    score: float
    step_index: int
    score_sum: float = field(default=0.0)

    def __post_init__(self) -> None:
        if not self.snapshots:
            raise ValidationError("a state record needs at least one snapshot")
        if self.score_sum == 0.0 and self.score != 0.0:
            self.score_sum = self.score * len(self.snapshots)

    @property
    def snapshot(self) -> Snapshot:
        return self.snapshots[-1]

    @property
    def config(self) -> Configuration:
        return self.snapshots[-1].config

    @property
    def eval_count(self) -> int:
        return len(self.snapshots)

    def to_wire(self) -> dict[str, Any]:
        return {
            "step_index": self.step_index,
            "score": self.score,
            "score_sum": self.score_sum,
            "eval_count": self.eval_count,
            "snapshots": [s.to_wire() for s in self.snapshots],
        }

    @classmethod
    def from_wire(cls, data: Mapping[str, Any]) -> "StateRecord":
        rec = cls(
            snapshots=[Snapshot.from_wire(s) for s in data["snapshots"]],
            score=float(data["score"]),
            step_index=int(data["step_index"]),
            score_sum=float(data["score_sum"]),
        )
        return rec
