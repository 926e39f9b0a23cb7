"""crosstune: cross-layer configuration tuning over a JSON/HTTP agent protocol."""

__version__ = "0.1.0"

from .model import (
    Changeability,
    Configuration,
    Direction,
    MetricSample,
    ParameterSpec,
    SearchSpace,
    Snapshot,
    StateRecord,
    SystemState,
    TuningDirective,
    ValidationError,
)

__all__ = [
    "Changeability",
    "Configuration",
    "Direction",
    "MetricSample",
    "ParameterSpec",
    "SearchSpace",
    "Snapshot",
    "StateRecord",
    "SystemState",
    "TuningDirective",
    "ValidationError",
    "__version__",
]
