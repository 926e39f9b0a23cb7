"""Child-process supervision: spawn with injected environment, stop, restart."""

from __future__ import annotations

import os
import subprocess
import time
from pathlib import Path


class ChildFailed(RuntimeError):
    pass


class ChildSupervisor:
    def __init__(
        self,
        command: list[str],
        base_env: dict[str, str],
        ready_file: str | None = None,
        start_timeout: float = 10.0,
    ):
        self.command = list(command)
        self.base_env = dict(base_env)
        self.ready_file = ready_file
        self.start_timeout = start_timeout
        self.proc: subprocess.Popen | None = None

    @property
    def pid(self) -> int | None:
        return self.proc.pid if self.proc else None

    def alive(self) -> bool:
        return self.proc is not None and self.proc.poll() is None

    def start(self, extra_env: dict[str, str]) -> int:
        """Spawn the child and block until it proves liveness by writing the
        ready file (which is removed first, so a stale one cannot satisfy)."""
        if self.alive():
            raise ChildFailed("child already running")
        if self.ready_file:
            Path(self.ready_file).unlink(missing_ok=True)
        env = {**os.environ, **self.base_env, **extra_env}
        self.proc = subprocess.Popen(self.command, env=env)
        if self.ready_file:
            deadline = time.monotonic() + self.start_timeout
            path = Path(self.ready_file)
            while not path.exists():
                if self.proc.poll() is not None:
                    raise ChildFailed(f"child exited with rc {self.proc.returncode} before becoming ready")
                if time.monotonic() > deadline:
                    self.stop()
                    raise ChildFailed(f"child not ready within {self.start_timeout}s")
                time.sleep(0.01)
        return self.proc.pid

    def stop(self) -> None:
        if self.proc is None:
            return
        if self.proc.poll() is None:
            self.proc.terminate()
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait(timeout=5)
        self.proc = None

    def restart(self, extra_env: dict[str, str]) -> int:
        self.stop()
        return self.start(extra_env)
