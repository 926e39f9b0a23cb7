"""Shared rig: a real controller subprocess plus an agent running in a thread.

The agent package talks to the controller exclusively over HTTP, so these
tests spawn the actual server process rather than importing it.
"""

import json
import socket
import subprocess
import sys
import threading
import time
from pathlib import Path

import pytest

from crosstune_agent import Agent, Unreachable, load_agent_config

SERVE = [sys.executable, "-m", "crosstune.cli", "serve"]


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


class ServerProc:
    def __init__(self, tmp: Path, port: int | None = None):
        self.tmp = tmp
        self.port = port or free_port()
        self.base = f"http://127.0.0.1:{self.port}"
        self.history = tmp / "history.jsonl"
        self.config = tmp / "server.json"
        # report_timeout > cycle_time so a single report survives tick jitter;
        # short long_poll_timeout so held poll threads drain quickly at teardown
        self.config.write_text(json.dumps(
            {"loop": {"cycle_time": 0.05, "snapshot_window": 1, "settle_cycles": 0,
                      "report_timeout": 0.3, "long_poll_timeout": 2.0}}
        ))
        self.proc: subprocess.Popen | None = None

    def start(self) -> None:
        self.proc = subprocess.Popen(
            [*SERVE, "--config", str(self.config), "--bind", f"127.0.0.1:{self.port}",
             "--history", str(self.history), "--seed", "9"],
            stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL,
        )
        from crosstune_agent.client import ControllerClient
        probe = ControllerClient(self.base, timeout=0.5, max_tries=1)
        deadline = time.monotonic() + 15
        while time.monotonic() < deadline:
            if self.proc.poll() is not None:
                raise RuntimeError(f"server died with rc {self.proc.returncode}")
            try:
                probe.stats()
                return
            except Exception:
                time.sleep(0.05)
        raise RuntimeError("server did not come up within 15s")

    def stop(self, sig=None) -> None:
        import signal as _signal
        if self.proc and self.proc.poll() is None:
            self.proc.send_signal(sig or _signal.SIGTERM)
            try:
                self.proc.wait(timeout=10)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait(timeout=10)


@pytest.fixture()
def server(tmp_path):
    s = ServerProc(tmp_path)
    s.start()
    yield s
    s.stop()


def probe_argv(status_path: Path, key: str) -> list[str]:
    return [sys.executable, "-c",
            f"import json; print(json.load(open({str(status_path)!r}))[{key!r}])"]


def demo_config(tmp_path: Path, base_url: str, *, name: str = "demo",
                online_only: bool = False):
    """Write and load an agent config for the synthetic workload child.

    With ``online_only`` the manifest drops the offline parameter, so the
    tuner never restarts the child and crash recovery is the only restart
    path left.
    """
    status = tmp_path / "status.json"
    control = tmp_path / "control.json"
    cfg = {
        "controller_url": base_url,
        "manifest": {
            "name": name,
            "layer": "workload",
            "metrics": [
                {"name": "latency_ms", "direction": "minimize", "weight": 1.0},
                {"name": "throughput", "direction": "maximize", "weight": 1.0},
            ],
            "parameters": [
                {"name": "batch_size", "min": 1, "max": 16, "step": 1,
                 "changeability": "online", "initial": 1},
                {"name": "spin_iters", "min": 0, "max": 9000, "step": 1000,
                 "changeability": "offline", "initial": 9000},
            ],
        },
        "child_command": [sys.executable, "-m", "crosstune_agent.workload"],
        "child_env": {
            "STATUS_PATH": str(status),
            "CONTROL_PATH": str(control),
            "TICK_SECONDS": "0.01",
        },
        "env_map": {"spin_iters": "SPIN_ITERS"},
        "control_file": str(control),
        "ready_file": str(status),
        "probes": {
            "latency_ms": probe_argv(status, "latency_ms"),
            "throughput": probe_argv(status, "throughput"),
        },
        "poll_interval": 0.05,
        "long_poll": 0.8,
        "request_timeout": 3.0,
        "backoff_base": 0.05,
        "backoff_cap": 0.5,
    }
    if online_only:
        cfg["manifest"]["parameters"] = cfg["manifest"]["parameters"][:1]
        cfg["env_map"] = {}
    path = tmp_path / "agent.json"
    path.write_text(json.dumps(cfg))
    return load_agent_config(path)


class AgentRunner:
    """Run an agent on a thread; tests watch its event list."""

    def __init__(self, cfg, max_reports: int | None = None):
        self.agent = Agent(cfg)
        self.max_reports = max_reports
        self.error: BaseException | None = None
        self.thread = threading.Thread(target=self._run, daemon=True)

    def _run(self) -> None:
        try:
            self.agent.run(max_reports=self.max_reports)
        except Unreachable:
            pass  # stopped mid-retry
        except BaseException as exc:
            self.error = exc

    def start(self) -> "AgentRunner":
        self.thread.start()
        return self

    def wait_event(self, kind: str, timeout: float = 30.0, after: int = 0) -> int:
        """Index of the first `kind` event at position >= after."""
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            events = self.agent.events
            for i in range(after, len(events)):
                if events[i][0] == kind:
                    return i
            if self.error is not None:
                raise AssertionError(f"agent died while waiting for {kind}: {self.error!r}")
            time.sleep(0.02)
        raise AssertionError(f"no {kind} event within {timeout}s; saw {[k for k, _ in self.agent.events]}")

    def stop(self) -> None:
        self.agent.stop_event.set()
        self.thread.join(timeout=20)
        assert not self.thread.is_alive(), "agent thread failed to stop"
        if self.error is not None:
            raise self.error
