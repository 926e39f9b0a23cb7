"""Operator configuration: one JSON file covering loop, tuner, and schedule."""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

from .controller import LoopConfig
from .entropy import EntropySchedule
from .model import ValidationError
from .tuner import TunerParams

DEFAULT_BIND = "127.0.0.1:8666"


@dataclass(frozen=True)
class CliConfig:
    bind: str = DEFAULT_BIND
    loop: LoopConfig = None  # type: ignore[assignment]
    tuner: TunerParams = None  # type: ignore[assignment]
    schedule: EntropySchedule | None = None

    def __post_init__(self) -> None:
        if self.loop is None:
            object.__setattr__(self, "loop", LoopConfig())
        if self.tuner is None:
            object.__setattr__(self, "tuner", TunerParams())

    @property
    def host(self) -> str:
        return self.bind.rsplit(":", 1)[0]

    @property
    def port(self) -> int:
        try:
            return int(self.bind.rsplit(":", 1)[1])
        except (IndexError, ValueError):
            raise ValidationError(f"bind must be host:port, got {self.bind!r}")


def _build(section: str, cls, data: dict):
    allowed = {f.name for f in fields(cls)}
    unknown = set(data) - allowed
    if unknown:
        raise ValidationError(f"{section}: unknown field {sorted(unknown)[0]!r}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{section}: {exc}")


def load_cli_config(path: str | Path | None) -> CliConfig:
    """Read a config file; every section and field is optional."""
    if path is None:
        return CliConfig()
    try:
        raw = Path(path).read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read config: {exc}")
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config is not valid JSON: {exc}")
    if not isinstance(data, dict):
        raise ValidationError("config must be a JSON object")

    known = {"bind", "loop", "tuner", "entropy"}
    unknown = set(data) - known
    if unknown:
        raise ValidationError(f"unknown config section {sorted(unknown)[0]!r}")

    schedule = None
    if "entropy" in data:
        ent = dict(data["entropy"])
        if "plateaus" in ent:
            ent["plateaus"] = tuple(ent["plateaus"])
        if "transitions" in ent:
            ent["transitions"] = tuple(ent["transitions"])
        schedule = _build("entropy", EntropySchedule, ent)

    return CliConfig(
        bind=str(data.get("bind", DEFAULT_BIND)),
        loop=_build("loop", LoopConfig, dict(data.get("loop", {}))),
        tuner=_build("tuner", TunerParams, dict(data.get("tuner", {}))),
        schedule=schedule,
    )
