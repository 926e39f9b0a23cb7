"""Reference tuning agent for the crosstune controller protocol."""

from .agent import Agent, run_agent
from .child import ChildFailed, ChildSupervisor
from .client import ControllerClient, ControllerError, Unreachable
from .config import AgentConfig, AgentConfigError, load_agent_config

__all__ = [
    "Agent",
    "AgentConfig",
    "AgentConfigError",
    "ChildFailed",
    "ChildSupervisor",
    "ControllerClient",
    "ControllerError",
    "Unreachable",
    "load_agent_config",
    "run_agent",
]
