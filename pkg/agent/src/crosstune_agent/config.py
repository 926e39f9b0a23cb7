"""Agent configuration: one JSON file describing the controller, the managed
child process, and how parameters and metrics map onto it."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path


class AgentConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AgentConfig:
    controller_url: str
    manifest: dict
    child_command: list[str]
    probes: dict[str, list[str]]
    env_map: dict[str, str] = field(default_factory=dict)
    control_file: str | None = None
    ready_file: str | None = None
    child_env: dict[str, str] = field(default_factory=dict)
    poll_interval: float = 0.5
    long_poll: float = 5.0
    request_timeout: float = 10.0
    backoff_base: float = 0.2
    backoff_cap: float = 5.0
    probe_timeout: float = 5.0
    start_timeout: float = 10.0

    def __post_init__(self) -> None:
        if not self.controller_url.startswith(("http://", "https://")):
            raise AgentConfigError(f"controller_url must be http(s), got {self.controller_url!r}")
        if not isinstance(self.manifest, dict) or "name" not in self.manifest:
            raise AgentConfigError("manifest must be an object with a 'name'")
        if not self.child_command:
            raise AgentConfigError("child_command must be a non-empty argv list")
        if not self.probes:
            raise AgentConfigError("at least one metric probe is required")
        declared = {m["name"] for m in self.manifest.get("metrics", [])}
        missing = declared - set(self.probes)
        if missing:
            raise AgentConfigError(f"declared metrics without a probe: {sorted(missing)}")
        param_names = {p["name"] for p in self.manifest.get("parameters", [])}
        unknown = set(self.env_map) - param_names
        if unknown:
            raise AgentConfigError(f"env_map names unknown parameters: {sorted(unknown)}")

    @property
    def pca_name(self) -> str:
        return self.manifest["name"]


def load_agent_config(path: str | Path) -> AgentConfig:
    try:
        raw = Path(path).read_text()
    except OSError as exc:
        raise AgentConfigError(f"cannot read config: {exc}")
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise AgentConfigError(f"config is not valid JSON: {exc}")
    if not isinstance(data, dict):
        raise AgentConfigError("config must be a JSON object")
    allowed = {f.name for f in fields(AgentConfig)}
    unknown = set(data) - allowed
    if unknown:
        raise AgentConfigError(f"unknown config field {sorted(unknown)[0]!r}")
    try:
        return AgentConfig(**data)
    except TypeError as exc:
        raise AgentConfigError(str(exc))
