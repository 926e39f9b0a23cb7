"""Entry point: `crosstune-agent --config agent.json`."""

from __future__ import annotations

import argparse
import signal
import sys
import threading

from .agent import run_agent
from .client import Unreachable
from .config import AgentConfigError, load_agent_config


def main(argv: list[str] | None = None) -> None:
    parser = argparse.ArgumentParser(prog="crosstune-agent",
                                     description="Tune a managed child process against a crosstune controller.")
    parser.add_argument("--config", required=True, help="agent config JSON")
    parser.add_argument("--max-reports", type=int, default=None,
                        help="stop after this many state reports (default: run forever)")
    args = parser.parse_args(argv)

    try:
        cfg = load_agent_config(args.config)
    except AgentConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        sys.exit(2)

    stop = threading.Event()

    def _graceful(signum, frame):
        stop.set()

    signal.signal(signal.SIGTERM, _graceful)
    signal.signal(signal.SIGINT, _graceful)

    def log_event(kind: str, payload: dict) -> None:
        detail = " ".join(f"{k}={v}" for k, v in payload.items())
        print(f"{kind} {detail}".strip(), file=sys.stderr)

    try:
        run_agent(cfg, stop=stop, max_reports=args.max_reports, on_event=log_event)
    except Unreachable:
        # only happens when stop fired mid-retry; that is a clean shutdown
        pass
    except AgentConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        sys.exit(2)


if __name__ == "__main__":
    main()
