"""Snapshot scoring: normalized, weighted, threshold-penalized metric aggregation.

Metric bounds are learned from observation rather than declared up front. Raw
extrema are widened to "scaled halves of the nearest power of ten" (3707.51
observed as a minimum becomes a lower bound of 3500; as a maximum, 4000) so
that normalization denominators stay stable under minor fluctuation and only
genuinely new extremes trigger a re-score of history.

Score semantics:
  * no threshold violated  -> normalized score in [0, 1]
  * any threshold violated -> -1 - clamp(overshoot / (hi - lo), 0, 1), in [-2, -1]

Violating states therefore always rank strictly below non-violating ones, and
the graded penalty keeps a slope for the search to climb out of infeasible
regions instead of a flat cliff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .model import Direction, MetricSample, Snapshot, StateRecord, TuningDirective

# tolerance when deciding whether x/h already sits on a half-step boundary
_SNAP_EPS = 1e-9


class IncompleteStateError(ValueError):
    """A snapshot is missing a tuning metric; the collection layer must prevent this."""


def round_bound(x: float, side: str) -> float:
    """Round to a multiple of half the nearest power of ten below |x|.

    side="down" rounds toward -inf, side="up" toward +inf, so bounds only ever
    widen the observed range. Values already on a half-step stay put.
    """
    if side not in ("down", "up"):
        raise ValueError(f"side must be 'down' or 'up', got {side!r}")
    if x == 0:
        return 0.0
    h = 0.5 * 10.0 ** math.floor(math.log10(max(abs(x), _SNAP_EPS)))
    q = x / h
    nearest = math.floor(q + 0.5)
    if abs(q - nearest) <= _SNAP_EPS:
        # float crumbs (0.3/0.05 = 5.999...) must not drag a boundary value off itself
        return nearest * h
    return (math.floor(q) if side == "down" else math.ceil(q)) * h


@dataclass
class MetricBounds:
    raw_lo: float
    raw_hi: float
    lo: float
    hi: float

    @property
    def span(self) -> float:
        return self.hi - self.lo


@dataclass
class ExtremaTracker:
    """Per-metric observed extrema plus the rounded bounds actually used.

    ``revision`` bumps whenever any rounded (lo, hi) pair changes; callers use
    it to decide when history needs re-scoring.
    """

    bounds: dict[str, MetricBounds] = field(default_factory=dict)
    revision: int = 0

    def observe(self, name: str, value: float) -> bool:
        """Fold one observation in; returns True iff rounded bounds changed."""
        b = self.bounds.get(name)
        if b is None:
            self.bounds[name] = MetricBounds(
                raw_lo=value,
                raw_hi=value,
                lo=round_bound(value, "down"),
                hi=round_bound(value, "up"),
            )
            self.revision += 1
            return True
        changed = False
        if value < b.raw_lo:
            b.raw_lo = value
            new_lo = round_bound(value, "down")
            if new_lo != b.lo:
                b.lo = new_lo
                changed = True
        if value > b.raw_hi:
            b.raw_hi = value
            new_hi = round_bound(value, "up")
            if new_hi != b.hi:
                b.hi = new_hi
                changed = True
        if changed:
            self.revision += 1
        return changed

    def observe_snapshot(self, snapshot: Snapshot) -> bool:
        changed = False
        for name, value in snapshot.metrics.items():
            # no short-circuit: every metric must be folded in
            changed |= self.observe(name, value)
        return changed

    def range(self, name: str) -> tuple[float, float]:
        b = self.bounds[name]
        return b.lo, b.hi


def update_extrema(tracker: ExtremaTracker, sample: MetricSample) -> bool:
    return tracker.observe(sample.name, sample.value)


def normalize(value: float, lo: float, hi: float, direction: Direction) -> float:
    """Min-max normalize into [0, 1]; a degenerate range scores a neutral 0.5."""
    if hi == lo:
        return 0.5
    if direction is Direction.MAXIMIZE:
        raw = (value - lo) / (hi - lo)
    else:
        raw = (hi - value) / (hi - lo)
    return min(max(raw, 0.0), 1.0)


def metric_score(value: float, directive: TuningDirective, lo: float, hi: float) -> float:
    """Score one tuning metric under the current bounds; see module docstring."""
    if directive.direction is Direction.AUXILIARY:
        raise ValueError("auxiliary metrics are not scored")
    violation = 0.0
    if directive.lower_threshold is not None and value < directive.lower_threshold:
        violation = directive.lower_threshold - value
    elif directive.upper_threshold is not None and value > directive.upper_threshold:
        violation = value - directive.upper_threshold
    if violation > 0.0:
        span = hi - lo
        overshoot = 1.0 if span <= 0 else min(max(violation / span, 0.0), 1.0)
        return -1.0 - overshoot
    return normalize(value, lo, hi, directive.direction)


@dataclass(frozen=True)
class ScoreBreakdown:
    scores: dict[str, float]
    violations: dict[str, bool]
    total: float
    weights_sum: float

    def to_wire(self) -> dict:
        return {
            "scores": dict(self.scores),
            "violations": dict(self.violations),
            "total": self.total,
            "weights_sum": self.weights_sum,
        }


def score_state(
    snapshot: Snapshot,
    directives: dict[str, TuningDirective],
    tracker: ExtremaTracker,
) -> ScoreBreakdown:
    """Weighted mean of per-metric scores over the tuning (non-auxiliary) metrics."""
    scores: dict[str, float] = {}
    violations: dict[str, bool] = {}
    weighted = 0.0
    weights_sum = 0.0
    for name in sorted(directives):
        directive = directives[name]
        if not directive.is_tuning:
            continue
        if name not in snapshot.metrics:
            raise IncompleteStateError(f"snapshot missing tuning metric {name!r}")
        lo, hi = tracker.range(name)
        s = metric_score(snapshot.metrics[name], directive, lo, hi)
        scores[name] = s
        violations[name] = s < 0.0
        weighted += directive.weight * s
        weights_sum += directive.weight
    if weights_sum == 0.0:
        raise IncompleteStateError("no tuning metrics to score")
    return ScoreBreakdown(
        scores=scores,
        violations=violations,
        total=weighted / weights_sum,
        weights_sum=weights_sum,
    )


def rescore_record(
    record: StateRecord,
    directives: dict[str, TuningDirective],
    tracker: ExtremaTracker,
) -> None:
    """Recompute a record's mean score from all its snapshots under current bounds.

    Snapshots taken before a later-registered PCA added new metrics are scored
    over the metrics they actually carry; strict completeness is enforced at
    collection time, not retroactively.
    """
    totals = []
    for snap in record.snapshots:
        scorable = {k: v for k, v in directives.items() if k in snap.metrics}
        totals.append(score_state(snap, scorable, tracker).total)
    record.score_sum = math.fsum(totals)
    record.score = record.score_sum / len(totals)


def rescore_history(
    history: list[StateRecord],
    directives: dict[str, TuningDirective],
    tracker: ExtremaTracker,
) -> list[StateRecord]:
    """Bring every record's score onto the current bounds; idempotent."""
    for record in history:
        rescore_record(record, directives, tracker)
    return history
