"""The tuning engine: one object owning history, extrema, schedule, and rng.

A session is the synchronous heart of the control loop. The controller (or the
benchmark harness) feeds it one snapshot per completed iteration and asks for
the next proposal; everything stateful about tuning lives here, everything
about transport, cadence, and settling lives in the controller.
"""

from __future__ import annotations

import random

from . import entropy as ec
from . import tuner
from .history import HistoryStore
from .model import Configuration, SearchSpace, Snapshot, StateRecord, TuningDirective
from .scoring import ExtremaTracker, ScoreBreakdown, rescore_history, rescore_record, score_state
from .tuner import Proposal, TunerParams


def validate(config: Configuration, space: SearchSpace, current: Configuration) -> Configuration:
    """Clamp genes into range, drop unknown parameters, fill missing ones from
    the currently published configuration."""
    genes = {}
    for p in space.params:
        if p.name in config.genes:
            idx = int(config.genes[p.name])
            genes[p.name] = min(max(idx, 0), p.n_values - 1)
        else:
            genes[p.name] = current.genes[p.name]
    return Configuration(genes=genes)


class TuningSession:
    def __init__(
        self,
        space: SearchSpace,
        directives: dict[str, TuningDirective],
        *,
        seed: int = 0,
        params: TunerParams | None = None,
        schedule: ec.EntropySchedule | None = None,
        store: HistoryStore | None = None,
        records: list[StateRecord] | None = None,
        iterations: int = 0,
    ):
        self.space = space
        self.directives = dict(directives)
        self.params = params or TunerParams()
        self.schedule = schedule or ec.make_schedule(space.ln_volume, space.dims)
        self.rng = random.Random(seed)
        self.store = store
        self.tracker = ExtremaTracker()
        self.records: list[StateRecord] = []
        self._by_config: dict[Configuration, StateRecord] = {}
        self.iterations = 0
        self.last_breakdown: ScoreBreakdown | None = None
        if records:
            self._replay(records, iterations)

    def _replay(self, records: list[StateRecord], iterations: int) -> None:
        # extrema are a min/max fold, so replay order does not matter; once the
        # final bounds are known a single rescore reproduces the exact scores
        for record in records:
            for snap in record.snapshots:
                self.tracker.observe_snapshot(snap)
        rescore_history(records, self.directives, self.tracker)
        self.records = list(records)
        self._by_config = {r.config: r for r in records}
        self.iterations = max(iterations, len(records))

    def observe(self, snapshot: Snapshot) -> StateRecord:
        """Fold one evaluated snapshot into history; returns its (merged) record."""
        if self.tracker.observe_snapshot(snapshot):
            rescore_history(self.records, self.directives, self.tracker)
        record = self._by_config.get(snapshot.config)
        if record is not None:
            record.snapshots.append(snapshot)
            rescore_record(record, self.directives, self.tracker)
        else:
            record = StateRecord(snapshots=[snapshot], score=0.0, step_index=self.iterations)
            rescore_record(record, self.directives, self.tracker)
            self.records.append(record)
            self._by_config[record.config] = record
        self.last_breakdown = score_state(snapshot, self.directives, self.tracker)
        self.iterations += 1
        if self.store is not None:
            self.store.append(record)
        return record

    def telemetry(self) -> ec.Telemetry:
        return ec.Telemetry(
            step_index=self.iterations,
            history_len=len(self.records),
            ln_volume=self.space.ln_volume,
            dims=max(self.space.dims, 1),
        )

    def entropy_state(self) -> tuple[float, float]:
        a = ec.alpha(self.telemetry(), self.schedule)
        return a, ec.entropy(a, self.schedule)

    def propose_next(self) -> tuple[Proposal, float, float]:
        """Next candidate plus the (alpha, entropy) pair that shaped it."""
        a, h = self.entropy_state()
        proposal = tuner.propose(self.records, self.space, h, self.rng, self.params)
        return proposal, a, h

    @property
    def best(self) -> StateRecord | None:
        if not self.records:
            return None
        return tuner.rank_history(self.records)[0]

    def extend(
        self,
        space: SearchSpace,
        directives: dict[str, TuningDirective],
        fill_genes: dict[str, int],
    ) -> None:
        """Grow the search space (a PCA registered mid-run). Historical configs
        are padded with the fill values: those evaluations ran while the new
        parameters sat at exactly those (initial) settings."""
        self.space = space
        self.directives.update(directives)
        self.schedule = ec.make_schedule(space.ln_volume, space.dims)
        if fill_genes:
            self._by_config.clear()
            for record in self.records:
                for snap in record.snapshots:
                    for name, idx in fill_genes.items():
                        snap.config.genes.setdefault(name, idx)
                self._by_config[record.config] = record
        # replayed records may have been scored before this registration made
        # all directives known; scores must not depend on registration order
        rescore_history(self.records, self.directives, self.tracker)
