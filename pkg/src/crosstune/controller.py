"""The central control loop: registration, collection, settling, publishing.

One Controller owns the registry, the tuning session, and the published
configuration. The protocol server calls the thread-safe methods (register,
submit_report, ack, view) from request handlers; a single loop thread (or a
test/benchmark driver) calls tick(). All tuning state mutation happens inside
tick; handlers only queue reports and record acks.

Phases:
  idle        no registered parameter or tuning metric yet; nothing to do
  collect     fire a cycle every cycle_time: assemble a complete state or
              discard the cycle; a full window triggers a tuning step
  await_acks  a configuration was published; wait until every PCA that owns
              parameters has acknowledged its enactment
  settle      acks are in; let settle_cycles full cycles pass before counting
              fresh states, so post-change transients stay out of snapshots
"""

from __future__ import annotations

import json
import math
import statistics
import threading
import time
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

from .entropy import is_exploitation
from .history import HistoryStore, JsonlWriter, load_history
from .model import (
    Changeability,
    Configuration,
    MetricSample,
    ParameterSpec,
    SearchSpace,
    Snapshot,
    SystemState,
    TuningDirective,
    ValidationError,
    canonical_json,
)
from .session import TuningSession, validate
from .tuner import Proposal, TunerParams

IDLE = "idle"
COLLECT = "collect"
AWAIT_ACKS = "await_acks"
SETTLE = "settle"


class ConflictError(ValueError):
    """Registration clashes with an existing PCA, metric, or parameter name."""


class UnknownPcaError(KeyError):
    pass


class StaleAckError(ValueError):
    """An ack named an epoch the controller has not published yet."""


class RealClock:
    def now(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)


class FakeClock:
    """Manually advanced clock for deterministic loop tests and benchmarks."""

    def __init__(self, start: float = 0.0):
        self._now = start

    def now(self) -> float:
        return self._now

    def sleep(self, seconds: float) -> None:
        self._now += seconds

    def advance(self, seconds: float) -> None:
        self._now += seconds


def parse_rfc3339(value: str) -> datetime:
    # datetime.fromisoformat grew Z-suffix support only in 3.11
    return datetime.fromisoformat(value.replace("Z", "+00:00"))


@dataclass(frozen=True)
class LoopConfig:
    cycle_time: float = 5.0
    snapshot_window: int = 3
    settle_cycles: int = 2
    report_timeout: float | None = None
    history_path: str | None = None
    stats_path: str | None = None
    long_poll_timeout: float = 30.0

    def __post_init__(self) -> None:
        # cycle_time 0 is the benchmark harness's "no pacing" mode
        if self.cycle_time < 0:
            raise ValidationError("cycle_time must be >= 0")
        if self.snapshot_window < 1:
            raise ValidationError("snapshot_window must be >= 1")
        if self.settle_cycles < 0:
            raise ValidationError("settle_cycles must be >= 0")
        if self.report_timeout is not None and self.report_timeout <= 0:
            raise ValidationError("report_timeout must be > 0")
        if self.long_poll_timeout <= 0:
            raise ValidationError("long_poll_timeout must be > 0")

    @property
    def effective_report_timeout(self) -> float:
        return self.report_timeout if self.report_timeout is not None else self.cycle_time


@dataclass
class PcaRegistration:
    pca_id: str
    layer: str
    metrics: dict[str, TuningDirective]
    units: dict[str, str]
    params: tuple[ParameterSpec, ...]
    initial_genes: dict[str, int]
    last_report_at: float | None = None
    acked_epoch: int = 0

    @property
    def has_params(self) -> bool:
        return len(self.params) > 0


@dataclass
class _ReportSlot:
    arrival: float
    epoch: int
    metrics: dict[str, float]
    timestamp: str


@dataclass
class Discard:
    reason: str
    missing: tuple[str, ...] = ()


def make_snapshot(states: list[SystemState]) -> Snapshot:
    """Per-metric median over a window of complete states at one shared epoch."""
    if not states:
        raise ValidationError("cannot snapshot an empty window")
    epochs = {s.config.epoch for s in states}
    if len(epochs) != 1:
        raise ValidationError(f"mixed epochs in snapshot window: {sorted(epochs)}")
    names = {m.name for m in states[0].metrics}
    metrics = {
        name: statistics.median([s.metric_map()[name] for s in states]) for name in names
    }
    return Snapshot(metrics=metrics, config=states[0].config, window=len(states))


def manifest_to_registration(manifest: dict) -> PcaRegistration:
    """Validate a registration payload and build the internal record."""
    name = manifest.get("name")
    if not name or not isinstance(name, str):
        raise ValidationError("manifest needs a non-empty name")
    layer = manifest.get("layer", "")
    metrics: dict[str, TuningDirective] = {}
    units: dict[str, str] = {}
    for m in manifest.get("metrics", []):
        mname = m.get("name")
        if not mname:
            raise ValidationError("metric entries need a name")
        if mname in metrics:
            raise ValidationError(f"duplicate metric {mname!r} in manifest")
        metrics[mname] = TuningDirective.from_wire(m)
        if "unit" in m:
            units[mname] = str(m["unit"])
    params = []
    initial_genes: dict[str, int] = {}
    seen = set()
    for p in manifest.get("parameters", []):
        pname = p.get("name")
        if pname in seen:
            raise ValidationError(f"duplicate parameter {pname!r} in manifest")
        seen.add(pname)
        spec = ParameterSpec(
            name=pname,
            layer=layer,
            min=float(p["min"]),
            max=float(p["max"]),
            step=float(p["step"]),
            changeability=Changeability(p.get("changeability", "online")),
        )
        params.append(spec)
        if "initial" in p and p["initial"] is not None:
            initial_genes[pname] = spec.grid_index(float(p["initial"]))
        else:
            initial_genes[pname] = (spec.n_values - 1) // 2
    return PcaRegistration(
        pca_id=name,
        layer=layer,
        metrics=metrics,
        units=units,
        params=tuple(params),
        initial_genes=initial_genes,
    )


class Controller:
    def __init__(
        self,
        loop_config: LoopConfig | None = None,
        *,
        clock=None,
        seed: int = 0,
        tuner_params: TunerParams | None = None,
        schedule=None,
    ):
        self.cfg = loop_config or LoopConfig()
        self.clock = clock or RealClock()
        self.seed = seed
        self.tuner_params = tuner_params or TunerParams()
        self.schedule = schedule

        self._lock = threading.RLock()
        self._published_changed = threading.Condition(self._lock)

        self.registrations: dict[str, PcaRegistration] = {}
        self.space = SearchSpace(params=())
        self.directives: dict[str, TuningDirective] = {}
        self.session: TuningSession | None = None

        self.epoch = 0
        self.published = Configuration(genes={}, epoch=0)
        self.prev_published: Configuration | None = None

        self.phase = IDLE
        self.window: list[SystemState] = []
        self.reports: dict[str, _ReportSlot] = {}
        self.discarded_cycles = 0
        self.last_discard: Discard | None = None
        self.settle_left = 0
        self.next_cycle_at: float | None = None
        self.cycle_count = 0

        self.last_proposal: Proposal | None = None
        self.last_alpha = 0.0
        self.last_entropy = 1.0

        self._store: HistoryStore | None = None
        self._stats_log: JsonlWriter | None = None
        self._pending_records = []
        self._pending_iterations = 0
        self._stop = threading.Event()

        if self.cfg.history_path:
            self._pending_records, self._pending_iterations = load_history(self.cfg.history_path)
            self._restore_state_file()
            self._store = HistoryStore(self.cfg.history_path)
        if self.cfg.stats_path:
            self._stats_log = JsonlWriter(self.cfg.stats_path)

    # -- persistence of the published-config sidecar -------------------------

    def _state_file(self) -> Path | None:
        if not self.cfg.history_path:
            return None
        return Path(str(self.cfg.history_path) + ".state.json")

    def _restore_state_file(self) -> None:
        path = self._state_file()
        if path is None or not path.exists():
            return
        data = json.loads(path.read_text(encoding="utf-8"))
        self.epoch = int(data["epoch"])
        self.published = Configuration(
            genes={k: int(v) for k, v in data["genes"].items()}, epoch=self.epoch
        )

    def _persist_state_file(self) -> None:
        path = self._state_file()
        if path is None:
            return
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(
            canonical_json({"epoch": self.epoch, "genes": self.published.genes}),
            encoding="utf-8",
        )
        tmp.replace(path)

    # -- registration ---------------------------------------------------------

    def register(self, manifest: dict) -> tuple[str, int]:
        reg = manifest_to_registration(manifest)
        with self._lock:
            if reg.pca_id in self.registrations:
                raise ConflictError(f"PCA {reg.pca_id!r} is already registered")
            for other in self.registrations.values():
                metric_clash = set(other.metrics) & set(reg.metrics)
                if metric_clash:
                    raise ConflictError(f"metric names already registered: {sorted(metric_clash)}")
                param_clash = {p.name for p in other.params} & {p.name for p in reg.params}
                if param_clash:
                    raise ConflictError(f"parameter names already registered: {sorted(param_clash)}")

            self.registrations[reg.pca_id] = reg
            self.space = self.space.extended(reg.params)
            self.directives.update(reg.metrics)
            new_genes = {
                name: idx
                for name, idx in reg.initial_genes.items()
                if name not in self.published.genes
            }
            if new_genes:
                merged = dict(self.published.genes)
                merged.update(new_genes)
                self.published = Configuration(genes=merged, epoch=self.epoch)
            if self.session is not None:
                self.session.extend(self.space, self.directives, new_genes)
            self._maybe_start()
            return reg.pca_id, self.epoch

    def _maybe_start(self) -> None:
        tunable = self.space.dims >= 1 and any(d.is_tuning for d in self.directives.values())
        if tunable and self.session is None:
            self.session = TuningSession(
                self.space,
                self.directives,
                seed=self.seed,
                params=self.tuner_params,
                schedule=self.schedule,
                store=self._store,
                records=self._pending_records,
                iterations=self._pending_iterations,
            )
            self._pending_records = []
            self.phase = COLLECT
            self.next_cycle_at = self.clock.now() + self.cfg.cycle_time

    # -- PCA-facing operations -------------------------------------------------

    def submit_report(
        self, pca_id: str, epoch: int, metrics: dict[str, float], timestamp: str
    ) -> tuple[bool, int]:
        with self._lock:
            reg = self.registrations.get(pca_id)
            if reg is None:
                raise UnknownPcaError(pca_id)
            missing = set(reg.metrics) - set(metrics)
            if missing:
                raise ValidationError(f"report missing declared metrics: {sorted(missing)}")
            declared = {name: float(metrics[name]) for name in reg.metrics}
            for name, value in declared.items():
                # NaN/Inf must not reach scoring; MetricSample re-checks at use
                if not math.isfinite(value):
                    raise ValidationError(f"metric {name!r} is not finite")
            now = self.clock.now()
            reg.last_report_at = now
            self.reports[pca_id] = _ReportSlot(
                arrival=now, epoch=int(epoch), metrics=declared, timestamp=timestamp
            )
            return True, self.epoch

    def ack(self, pca_id: str, epoch: int) -> None:
        with self._lock:
            reg = self.registrations.get(pca_id)
            if reg is None:
                raise UnknownPcaError(pca_id)
            if epoch > self.epoch:
                raise StaleAckError(f"epoch {epoch} has not been published (current {self.epoch})")
            reg.acked_epoch = max(reg.acked_epoch, int(epoch))
            self._check_acks()

    def _check_acks(self) -> None:
        if self.phase != AWAIT_ACKS:
            return
        actors = [r for r in self.registrations.values() if r.has_params]
        if all(r.acked_epoch >= self.epoch for r in actors):
            # settle countdown starts at the last ack
            if self.cfg.settle_cycles > 0:
                self.phase = SETTLE
                self.settle_left = self.cfg.settle_cycles
                self.next_cycle_at = self.clock.now() + self.cfg.cycle_time
            else:
                self._resume_collect()

    def _resume_collect(self) -> None:
        self.phase = COLLECT
        self.window = []
        self.next_cycle_at = self.clock.now() + self.cfg.cycle_time

    def view(self, pca_id: str) -> dict:
        with self._lock:
            reg = self.registrations.get(pca_id)
            if reg is None:
                raise UnknownPcaError(pca_id)
            return self._view_locked(reg)

    def _view_locked(self, reg: PcaRegistration) -> dict:
        params = []
        requires_restart = False
        for p in reg.params:
            idx = self.published.genes[p.name]
            params.append(
                {
                    "name": p.name,
                    "value": p.grid_value(idx),
                    "changeability": p.changeability.value,
                }
            )
            if p.changeability is Changeability.OFFLINE and self.prev_published is not None:
                if self.prev_published.genes.get(p.name, idx) != idx:
                    requires_restart = True
        return {
            "epoch": self.epoch,
            "parameters": params,
            "requires_restart": requires_restart,
        }

    def wait_view(self, pca_id: str, wait_epoch: int, timeout: float | None = None) -> dict:
        """Long-poll: return once epoch > wait_epoch, or at timeout, whichever first."""
        deadline = time.monotonic() + (timeout if timeout is not None else self.cfg.long_poll_timeout)
        with self._lock:
            if pca_id not in self.registrations:
                raise UnknownPcaError(pca_id)
            while self.epoch <= wait_epoch:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    break
                self._published_changed.wait(remaining)
                if pca_id not in self.registrations:
                    raise UnknownPcaError(pca_id)
            return self._view_locked(self.registrations[pca_id])

    # -- the loop ----------------------------------------------------------------

    def tick(self, now: float | None = None) -> None:
        with self._lock:
            if now is None:
                now = self.clock.now()
            if self.phase == IDLE:
                return
            if self.phase == AWAIT_ACKS:
                self._check_acks()
                return
            if self.next_cycle_at is not None and now < self.next_cycle_at:
                return
            # cycle boundary: scheduling from `now` keeps intervals >= cycle_time
            self.next_cycle_at = now + self.cfg.cycle_time
            self.cycle_count += 1
            if self.phase == SETTLE:
                self.settle_left -= 1
                if self.settle_left <= 0:
                    self._resume_collect()
                return
            state = self._assemble_state(now)
            if isinstance(state, Discard):
                self.discarded_cycles += 1
                self.last_discard = state
                return
            self.window.append(state)
            if len(self.window) >= self.cfg.snapshot_window:
                snapshot = make_snapshot(self.window)
                self.window = []
                self._step(snapshot)

    def _assemble_state(self, now: float) -> SystemState | Discard:
        cutoff = now - self.cfg.effective_report_timeout
        samples: list[MetricSample] = []
        missing: list[str] = []
        for pca_id, reg in self.registrations.items():
            slot = self.reports.get(pca_id)
            if slot is None or slot.arrival < cutoff:
                missing.append(f"{pca_id} (no report in window)")
            elif slot.epoch != self.epoch:
                missing.append(f"{pca_id} (stale epoch {slot.epoch})")
            else:
                for name, value in slot.metrics.items():
                    samples.append(
                        MetricSample(name=name, value=value, directive=reg.metrics[name])
                    )
        if missing:
            return Discard(reason="partial state", missing=tuple(missing))
        return SystemState(metrics=tuple(samples), config=self.published, timestamp=now)

    def _step(self, snapshot: Snapshot) -> None:
        assert self.session is not None
        self.session.observe(snapshot)
        proposal, a, h = self.session.propose_next()
        self.last_proposal = proposal
        self.last_alpha = a
        self.last_entropy = h
        validated = validate(proposal.config, self.space, self.published)
        self.prev_published = self.published
        self.epoch += 1
        self.published = validated.replace_epoch(self.epoch)
        self._persist_state_file()
        self._log_stats()
        self.phase = AWAIT_ACKS
        self._check_acks()  # actors may already be caught up (e.g. none registered)
        self._published_changed.notify_all()

    # -- observability ------------------------------------------------------------

    def stats(self) -> dict:
        with self._lock:
            best = self.session.best if self.session else None
            breakdown = self.session.last_breakdown if self.session else None
            # before any PCA registers, a restarted controller still reports
            # the step counter restored from its history file
            return {
                "step_index": self.session.iterations if self.session else self._pending_iterations,
                "history_len": len(self.session.records) if self.session else len(self._pending_records),
                "epoch": self.epoch,
                "alpha": self.last_alpha,
                "entropy": self.last_entropy,
                "phase": "exploitation" if is_exploitation(self.last_entropy) else "exploration",
                "loop_phase": self.phase,
                "best": None
                if best is None
                else {"score": best.score, "config": dict(best.config.genes), "step_index": best.step_index},
                "last_score": None if breakdown is None else breakdown.to_wire(),
                "last_proposal": None
                if self.last_proposal is None
                else {
                    "kind": self.last_proposal.kind.value,
                    "parents": list(self.last_proposal.parents),
                },
                "discarded_cycles": self.discarded_cycles,
                "pcas": [
                    {
                        "pca_id": reg.pca_id,
                        "acked_epoch": reg.acked_epoch,
                        "reporting": reg.last_report_at is not None,
                    }
                    for _, reg in sorted(self.registrations.items())
                ],
            }

    def _log_stats(self) -> None:
        if self._stats_log is not None:
            self._stats_log.write(self.stats())

    def history_lines(self, from_step: int = 0) -> list[str]:
        with self._lock:
            records = self.session.records if self.session else []
            return [
                canonical_json(r.to_wire()) for r in records if r.step_index >= from_step
            ]

    # -- service runner -------------------------------------------------------------

    def run(self) -> None:
        """Blocking loop runner; stop() exits after the current tick."""
        while not self._stop.is_set():
            self.tick(self.clock.now())
            self.clock.sleep(min(self.cfg.cycle_time or 0.05, 0.05))
        self.close()

    def stop(self) -> None:
        self._stop.set()

    def close(self) -> None:
        with self._lock:
            if self._store is not None:
                self._store.close()
            if self._stats_log is not None:
                self._stats_log.close()
