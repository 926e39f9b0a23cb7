"""The agent loop: register, probe, report, long-poll, enact, acknowledge.

Single-threaded by construction. One pass of the loop probes the managed
child's metrics, reports them at the currently enacted epoch, then long-polls
for the next configuration. A new epoch is enacted before it is acknowledged:
online parameters are rewritten into the child's control file in place,
offline parameter changes stop the child, rewrite its environment, and start
it again; the ack only goes out once the child has proven liveness.

Two controller responses get special handling. 409 on register means a
previous life of this agent is still registered: adopt the current
configuration and carry on. 404 on any later call means the controller was
restarted and forgot the fleet: re-register and re-adopt. Anything
network-shaped retries inside the client with capped backoff.
"""

from __future__ import annotations

import json
import math
import os
import subprocess
import threading
import time

from .child import ChildSupervisor
from .client import ControllerClient, ControllerError
from .config import AgentConfig


def _env_str(value: float) -> str:
    # grid values arrive as floats; integral ones must not surprise children
    # doing int(os.environ[...])
    if float(value).is_integer():
        return str(int(value))
    return str(value)


class Agent:
    def __init__(self, cfg: AgentConfig, *, stop: threading.Event | None = None, on_event=None):
        self.cfg = cfg
        self.stop_event = stop or threading.Event()
        self.events: list[tuple[str, dict]] = []
        self._on_event = on_event
        self.client = ControllerClient(
            cfg.controller_url,
            timeout=cfg.request_timeout,
            backoff_base=cfg.backoff_base,
            backoff_cap=cfg.backoff_cap,
            should_stop=self.stop_event.is_set,
        )
        self.child = ChildSupervisor(
            cfg.child_command, cfg.child_env,
            ready_file=cfg.ready_file, start_timeout=cfg.start_timeout,
        )
        self.epoch = 0
        self.reports_sent = 0
        self._last_env: dict[str, str] = {}

    # --- bookkeeping ---

    def _emit(self, kind: str, **payload) -> None:
        self.events.append((kind, payload))
        if self._on_event:
            self._on_event(kind, payload)

    # --- enactment ---

    def _split(self, view: dict) -> tuple[dict, dict]:
        online, offline = {}, {}
        for p in view["parameters"]:
            (offline if p["changeability"] == "offline" else online)[p["name"]] = p["value"]
        return online, offline

    def _write_control(self, online: dict) -> None:
        if not self.cfg.control_file:
            return
        tmp = f"{self.cfg.control_file}.tmp"
        with open(tmp, "w") as f:
            json.dump(online, f)
        os.replace(tmp, self.cfg.control_file)

    def _enact(self, view: dict) -> None:
        online, offline = self._split(view)
        self._write_control(online)
        env = {var: _env_str(offline[name]) for name, var in self.cfg.env_map.items() if name in offline}
        needs_start = not self.child.alive()
        # a pid with no live process means the child died behind our back,
        # most often while we sat in the long poll; the restart below absorbs
        # it, but the death should still show in the event stream
        if needs_start and self.child.pid is not None:
            self._emit("child_exit_detected", pid=self.child.pid)
        if view["requires_restart"] or needs_start:
            pid = self.child.restart(env)
            self._last_env = env
            self._emit("child_started", pid=pid)
            self._emit("enacted_offline" if not needs_start else "enacted_initial",
                       epoch=view["epoch"], pid=pid)
        else:
            self._emit("enacted_online", epoch=view["epoch"], pid=self.child.pid)

    def _adopt(self) -> None:
        view = self.client.get_config(self.cfg.pca_name)
        self._enact(view)
        self.client.ack(self.cfg.pca_name, view["epoch"])
        self._emit("acked", epoch=view["epoch"])
        self.epoch = view["epoch"]

    def _register(self) -> None:
        try:
            _, epoch = self.client.register(self.cfg.manifest)
            self._emit("registered", epoch=epoch)
        except ControllerError as exc:
            if exc.status != 409:
                raise
            # an earlier life of this agent is still on the books
            self._emit("already_registered")
        self._adopt()

    # --- the loop ---

    def _probe_all(self) -> dict[str, float] | None:
        values = {}
        for name, argv in self.cfg.probes.items():
            try:
                out = subprocess.run(argv, capture_output=True, text=True, timeout=self.cfg.probe_timeout)
            except subprocess.TimeoutExpired:
                return None
            if out.returncode != 0:
                return None
            try:
                value = float(out.stdout.strip())
            except ValueError:
                return None
            if not math.isfinite(value):
                return None
            values[name] = value
        return values

    def _step(self) -> None:
        if not self.child.alive():
            self._emit("child_exit_detected", pid=self.child.pid)
            pid = self.child.start(self._last_env)
            self._emit("child_started", pid=pid)

        values = self._probe_all()
        if values is None:
            time.sleep(self.cfg.poll_interval)
            return

        try:
            self.client.report(self.cfg.pca_name, self.epoch, values)
            self.reports_sent += 1
            self._emit("reported", epoch=self.epoch)
            # the poll returns once the controller's epoch EXCEEDS wait_epoch,
            # so we hand it the epoch we are already on
            view = self.client.get_config(
                self.cfg.pca_name, wait_epoch=self.epoch, long_poll=self.cfg.long_poll,
            )
        except ControllerError as exc:
            if exc.status == 404:
                # controller restarted and forgot the fleet
                self._emit("reregistering")
                self._register()
                return
            raise

        if view["epoch"] > self.epoch:
            self._enact(view)
            self.client.ack(self.cfg.pca_name, view["epoch"])
            self._emit("acked", epoch=view["epoch"])
            self.epoch = view["epoch"]
        else:
            time.sleep(self.cfg.poll_interval)

    def run(self, max_reports: int | None = None) -> None:
        try:
            self._register()
            while not self.stop_event.is_set():
                if max_reports is not None and self.reports_sent >= max_reports:
                    break
                self._step()
        finally:
            self.child.stop()


def run_agent(cfg: AgentConfig, *, stop: threading.Event | None = None,
              max_reports: int | None = None, on_event=None) -> Agent:
    agent = Agent(cfg, stop=stop, on_event=on_event)
    agent.run(max_reports=max_reports)
    return agent
