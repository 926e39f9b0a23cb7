"""Synthetic tunable workload used by the demo agent.

Runs a spin-and-report loop: per tick it burns SPIN_ITERS iterations of CPU,
reads the online knob from the control file, and atomically rewrites a status
JSON with the resulting latency/throughput figures. The response surface is
deterministic so a tuning run shows clean improvement: spinning hurts both
metrics, batching amortizes per-request cost with diminishing returns.

Environment:
  STATUS_PATH    where to write the status JSON (required)
  CONTROL_PATH   JSON file with online knobs, re-read every tick (optional)
  SPIN_ITERS     CPU iterations per tick, the offline knob (default 0)
  TICK_SECONDS   loop period (default 0.02)
"""

import json
import os
import time


def measure(spin_iters: int, batch_size: int) -> dict:
    latency_ms = 5.0 + spin_iters / 500.0 + 40.0 / batch_size
    throughput = 1000.0 * batch_size / (16.0 + batch_size) / (1.0 + spin_iters / 3000.0)
    return {"latency_ms": latency_ms, "throughput": throughput}


def read_control(path: str) -> dict:
    if not path:
        return {}
    try:
        with open(path) as f:
            data = json.load(f)
    except (OSError, ValueError):
        # mid-rewrite or not created yet; keep last defaults
        return {}
    return data if isinstance(data, dict) else {}


def main() -> None:
    status_path = os.environ["STATUS_PATH"]
    control_path = os.environ.get("CONTROL_PATH", "")
    spin_iters = int(os.environ.get("SPIN_ITERS", "0"))
    period = float(os.environ.get("TICK_SECONDS", "0.02"))

    tick = 0
    while True:
        control = read_control(control_path)
        batch_size = min(max(int(control.get("batch_size", 1)), 1), 64)

        acc = 0
        for _ in range(spin_iters):
            acc += 1

        status = measure(spin_iters, batch_size)
        status["pid"] = os.getpid()
        status["tick"] = tick
        tmp = f"{status_path}.tmp"
        with open(tmp, "w") as f:
            json.dump(status, f)
        os.replace(tmp, status_path)

        tick += 1
        time.sleep(period)


if __name__ == "__main__":
    main()
