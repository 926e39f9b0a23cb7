"""Minimal controller client over stdlib HTTP with bounded-backoff retries.

Network failures and 5xx responses retry forever (delay capped, jittered)
until the caller's should_stop fires; the controller going away must never
kill a running agent. 4xx responses raise immediately: they mean the request
itself is wrong (or the controller forgot us), which the agent handles by
protocol, not by retrying the same bytes.
"""

from __future__ import annotations

import json
import random
import time
import urllib.error
import urllib.request
from datetime import datetime, timezone


class ControllerError(RuntimeError):
    """A definitive (non-retryable) controller response."""

    def __init__(self, status: int, message: str):
        super().__init__(f"{status}: {message}")
        self.status = status
        self.message = message


class Unreachable(RuntimeError):
    """Retries were stopped before the controller answered."""


def rfc3339_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds").replace("+00:00", "Z")


class ControllerClient:
    def __init__(
        self,
        base_url: str,
        *,
        timeout: float = 10.0,
        backoff_base: float = 0.2,
        backoff_cap: float = 5.0,
        should_stop=None,
        sleeper=time.sleep,
        rng: random.Random | None = None,
        max_tries: int | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.backoff_base = backoff_base
        self.backoff_cap = backoff_cap
        self.should_stop = should_stop or (lambda: False)
        self.sleeper = sleeper
        self.rng = rng or random.Random()
        self.max_tries = max_tries

    def _request(self, method: str, path: str, body: dict | None = None, timeout: float | None = None):
        url = f"{self.base_url}{path}"
        data = json.dumps(body).encode() if body is not None else None
        tries = 0
        while True:
            req = urllib.request.Request(
                url, data=data, method=method,
                headers={"Content-Type": "application/json"} if data else {},
            )
            try:
                with urllib.request.urlopen(req, timeout=timeout or self.timeout) as resp:
                    payload = resp.read().decode()
                    return resp.status, payload
            except urllib.error.HTTPError as exc:
                payload = exc.read().decode()
                if exc.code < 500:
                    try:
                        message = json.loads(payload).get("error", payload)
                    except ValueError:
                        message = payload
                    raise ControllerError(exc.code, message)
                # 5xx falls through to the retry path
            except (urllib.error.URLError, ConnectionError, TimeoutError, OSError):
                pass
            tries += 1
            if self.max_tries is not None and tries >= self.max_tries:
                raise Unreachable(f"{method} {path}: gave up after {tries} tries")
            if self.should_stop():
                raise Unreachable(f"{method} {path}: stopped while retrying")
            delay = min(self.backoff_cap, self.backoff_base * 2 ** (tries - 1))
            self.sleeper(delay + self.rng.uniform(0.0, delay * 0.1))

    def _json(self, method: str, path: str, body: dict | None = None, timeout: float | None = None) -> dict:
        _, payload = self._request(method, path, body, timeout)
        return json.loads(payload)

    def register(self, manifest: dict) -> tuple[str, int]:
        out = self._json("POST", "/v1/pcas", manifest)
        return out["pca_id"], out["epoch"]

    def report(self, pca_id: str, epoch: int, metrics: dict[str, float], timestamp: str | None = None) -> int:
        out = self._json(
            "POST", f"/v1/pcas/{pca_id}/state",
            {
                "epoch": epoch,
                "metrics": [{"name": k, "value": v} for k, v in sorted(metrics.items())],
                "timestamp": timestamp or rfc3339_now(),
            },
        )
        return out["current_epoch"]

    def get_config(self, pca_id: str, wait_epoch: int | None = None, long_poll: float = 0.0) -> dict:
        path = f"/v1/pcas/{pca_id}/config"
        timeout = self.timeout
        if wait_epoch is not None:
            path += f"?wait_epoch={wait_epoch}"
            timeout = long_poll + self.timeout
        return self._json("GET", path, timeout=timeout)

    def ack(self, pca_id: str, epoch: int) -> None:
        self._json("POST", f"/v1/pcas/{pca_id}/ack", {"epoch": epoch})

    def stats(self) -> dict:
        return self._json("GET", "/v1/stats")

    def history_lines(self, from_step: int = 0) -> list[str]:
        _, payload = self._request("GET", f"/v1/history?from={from_step}")
        return [line for line in payload.splitlines() if line]
