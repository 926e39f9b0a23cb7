"""Append-only JSON Lines persistence for evaluated-state history.

Each control-loop iteration appends exactly one line: a fresh record, or a
superseding copy of an existing record after a re-evaluation merge (same
step_index, one more snapshot). Loading therefore keeps the last line per
step_index. A torn final line (crash mid-write) is tolerated and dropped;
corruption anywhere else is an error.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

from .model import StateRecord, canonical_json


class HistoryCorruptError(RuntimeError):
    pass


class HistoryStore:
    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "a", encoding="utf-8")

    def append(self, record: StateRecord) -> None:
        line = canonical_json(record.to_wire())
        self._fh.write(line + "\n")
        self._fh.flush()
        os.fsync(self._fh.fileno())

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.close()

    def __enter__(self) -> "HistoryStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def load_history(path: str | Path) -> tuple[list[StateRecord], int]:
    """Load records (last line wins per step_index) plus the total line count.

    The line count equals completed loop iterations, letting a restarted
    controller resume its step counter exactly.
    """
    path = Path(path)
    if not path.exists():
        return [], 0
    by_step: dict[int, StateRecord] = {}
    lines = path.read_text(encoding="utf-8").splitlines()
    count = 0
    for i, line in enumerate(lines):
        if not line.strip():
            continue
        try:
            record = StateRecord.from_wire(json.loads(line))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            if i == len(lines) - 1:
                break  # torn final line from a crash mid-append
            raise HistoryCorruptError(f"{path}:{i + 1}: {exc}") from exc
        by_step[record.step_index] = record
        count += 1
    return [by_step[k] for k in sorted(by_step)], count


class JsonlWriter:
    """Plain line appender for stats logs; no durability guarantees needed."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "a", encoding="utf-8")

    def write(self, payload: dict) -> None:
        self._fh.write(canonical_json(payload) + "\n")
        self._fh.flush()

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.close()
