"""Synthetic tuning benchmark: random multi-metric systems on [0,1] grids.

Six function families are randomly assigned to parameter subsets, producing
interdependent and partly conflicting objectives. Trials drive the real
control loop in-process with a fake clock and count steps until the evaluated
objective reaches a fraction of a reference optimum.
"""

from __future__ import annotations

import csv
import itertools
import math
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .controller import Controller, FakeClock, LoopConfig
from .model import ParameterSpec, SearchSpace, ValidationError

FAMILIES = ("sum", "log", "square", "product", "difference", "average")

EXHAUSTIVE_LIMIT = 10**6
ASCENT_RESTARTS = 100
ASCENT_MAX_SWEEPS = 200

_TS = "1970-01-01T00:00:00Z"


def _apply(kind: str, cols: Sequence) -> object:
    """Evaluate one family over per-parameter columns (floats or arrays)."""
    if kind == "sum":
        return sum(cols)
    if kind == "log":
        total = sum(cols)
        return np.log1p(total) if isinstance(total, np.ndarray) else math.log1p(total)
    if kind == "square":
        return sum(c * c for c in cols)
    if kind == "product":
        out = cols[0]
        for c in cols[1:]:
            out = out * c
        return out
    if kind == "difference":
        return cols[0] - sum(cols[1:]) if len(cols) > 1 else cols[0]
    if kind == "average":
        return sum(cols) / len(cols)
    raise ValueError(f"unknown function kind {kind!r}")


@dataclass(frozen=True)
class SyntheticSystem:
    space: SearchSpace
    metric_assignments: tuple[tuple[str, tuple[int, ...]], ...]
    seed: int
    d: int
    m: int
    v: int
    _ranges: tuple[tuple[float, float], ...] = field(default=(), compare=False)

    @property
    def params(self) -> tuple[ParameterSpec, ...]:
        return self.space.params

    @property
    def complexity(self) -> int:
        return self.d * self.v * self.m

    def metric_names(self) -> list[str]:
        return [f"f{k:02d}" for k in range(self.m)]

    def ranges(self) -> tuple[tuple[float, float], ...]:
        if not self._ranges:
            object.__setattr__(self, "_ranges", tuple(metric_ranges(self)))
        return self._ranges

    def manifest(self) -> dict:
        return {
            "name": f"synth-{self.seed}",
            "layer": "synthetic",
            "metrics": [{"name": n, "direction": "maximize"} for n in self.metric_names()],
            "parameters": [
                {"name": p.name, "min": p.min, "max": p.max, "step": p.step}
                for p in self.params
            ],
        }


def gen_problem(d: int, m: int, v: int, seed: int) -> SyntheticSystem:
    """Deterministically build a random system: d params, m metrics, v values each."""
    if d < 2:
        raise ValidationError("need at least 2 parameters")
    if m < 1:
        raise ValidationError("need at least 1 metric")
    if v < 2:
        raise ValidationError("need at least 2 values per parameter")
    rng = random.Random(seed)
    width = max(2, len(str(d - 1)))
    params = tuple(
        ParameterSpec(name=f"p{i:0{width}d}", layer="synthetic", min=0.0, max=1.0, step=1.0 / (v - 1))
        for i in range(d)
    )
    kinds = rng.sample(FAMILIES, len(FAMILIES))[: min(m, len(FAMILIES))]
    while len(kinds) < m:
        kinds.append(rng.choice(FAMILIES))
    assignments = []
    hi = min(5, d)
    for kind in kinds:
        size = rng.randint(2, hi)
        subset = tuple(rng.sample(range(d), size))
        assignments.append((kind, subset))
    return SyntheticSystem(
        space=SearchSpace(params=params),
        metric_assignments=tuple(assignments),
        seed=seed,
        d=d,
        m=m,
        v=v,
    )


def eval_raw(system: SyntheticSystem, values: Sequence[float]) -> list[float]:
    """Raw per-metric values at a point (values ordered by parameter index)."""
    return [
        float(_apply(kind, [values[i] for i in subset]))
        for kind, subset in system.metric_assignments
    ]


def metric_ranges(system: SyntheticSystem) -> list[tuple[float, float]]:
    """Per-metric (lo, hi) over the grid by corner enumeration.

    Every family is coordinatewise monotone on the nonnegative grid, so
    extrema sit at subset corners; the actual grid endpoints are used so that
    normalization matches values the loop will really see.
    """
    out = []
    for kind, subset in system.metric_assignments:
        endpoints = []
        for i in subset:
            p = system.params[i]
            endpoints.append((p.grid_value(0), p.grid_value(p.n_values - 1)))
        lo = math.inf
        hi = -math.inf
        for corner in itertools.product(*endpoints):
            raw = float(_apply(kind, corner))
            lo = min(lo, raw)
            hi = max(hi, raw)
        out.append((lo, hi))
    return out


def objective(system: SyntheticSystem, raws: Sequence[float]) -> float:
    """Equal-weight mean of min-max normalized metric values."""
    ranges = system.ranges()
    total = 0.0
    for raw, (lo, hi) in zip(raws, ranges):
        total += 0.5 if hi <= lo else (raw - lo) / (hi - lo)
    return total / len(raws)


def _grid_values(system: SyntheticSystem) -> np.ndarray:
    p = system.params[0]
    return np.array([p.grid_value(i) for i in range(p.n_values)])


def _exhaustive_optimum(system: SyntheticSystem) -> float:
    grid = _grid_values(system)
    v, d = system.v, system.d
    n = v**d
    idx = np.arange(n)
    ranges = system.ranges()

    def column(i: int) -> np.ndarray:
        stride = v ** (d - 1 - i)
        return grid[(idx // stride) % v]

    acc = np.zeros(n)
    for (kind, subset), (lo, hi) in zip(system.metric_assignments, ranges):
        raw = _apply(kind, [column(i) for i in subset])
        acc += 0.5 if hi <= lo else (raw - lo) / (hi - lo)
    return float(acc.max()) / len(system.metric_assignments)


def _ascent_optimum(system: SyntheticSystem) -> float:
    """Vectorized multi-start coordinate ascent over the grid."""
    grid = _grid_values(system)
    v, d, m = system.v, system.d, system.m
    ranges = system.ranges()
    rng = np.random.default_rng(system.seed)
    pos = rng.integers(0, v, size=(ASCENT_RESTARTS, d))
    vals = grid[pos]

    def norm(k: int, raw):
        lo, hi = ranges[k]
        return 0.5 if hi <= lo else (raw - lo) / (hi - lo)

    scores = np.zeros((ASCENT_RESTARTS, m))
    for k, (kind, subset) in enumerate(system.metric_assignments):
        scores[:, k] = norm(k, _apply(kind, [vals[:, i] for i in subset]))

    touching = [
        [k for k, (_, subset) in enumerate(system.metric_assignments) if j in subset]
        for j in range(d)
    ]
    for _ in range(ASCENT_MAX_SWEEPS):
        changed = False
        for j in range(d):
            affected = touching[j]
            if not affected:
                continue
            rest = scores.sum(axis=1) - scores[:, affected].sum(axis=1)
            cand = np.broadcast_to(rest[:, None], (ASCENT_RESTARTS, v)).copy()
            per_metric = []
            for k in affected:
                kind, subset = system.metric_assignments[k]
                others = [i for i in subset if i != j]
                reps = subset.count(j)  # subsets are sampled without replacement, so 1
                o = vals[:, others]
                if kind == "sum":
                    raw = o.sum(axis=1)[:, None] + reps * grid[None, :]
                elif kind == "log":
                    raw = np.log1p(o.sum(axis=1)[:, None] + reps * grid[None, :])
                elif kind == "square":
                    raw = (o * o).sum(axis=1)[:, None] + reps * grid[None, :] ** 2
                elif kind == "product":
                    raw = o.prod(axis=1)[:, None] * grid[None, :] ** reps
                elif kind == "average":
                    raw = (o.sum(axis=1)[:, None] + reps * grid[None, :]) / len(subset)
                elif kind == "difference":
                    if subset[0] == j:
                        raw = grid[None, :] - o.sum(axis=1)[:, None]
                    else:
                        first = vals[:, subset[0]]
                        tail = [i for i in subset[1:] if i != j]
                        raw = (first - vals[:, tail].sum(axis=1))[:, None] - grid[None, :]
                else:
                    raise ValueError(kind)
                normed = norm(k, raw)
                per_metric.append(normed)
                cand += normed
            best_j = cand.argmax(axis=1)
            moved = pos[:, j] != best_j
            if moved.any():
                changed = True
                pos[:, j] = best_j
                vals[:, j] = grid[best_j]
                take = np.arange(ASCENT_RESTARTS)
                for k, normed in zip(affected, per_metric):
                    scores[:, k] = normed[take, best_j]
        if not changed:
            break
    return float(scores.sum(axis=1).max()) / m


def reference_optimum(system: SyntheticSystem) -> float:
    if system.space.volume <= EXHAUSTIVE_LIMIT:
        return _exhaustive_optimum(system)
    return _ascent_optimum(system)


@dataclass(frozen=True)
class TrialResult:
    d: int
    m: int
    v: int
    seed: int
    steps: int  # = cap when capped
    capped: bool
    best_fraction: float
    complexity: int

    @property
    def steps_to_target(self) -> int | None:
        return None if self.capped else self.steps


def run_trial(
    system: SyntheticSystem,
    target_frac: float = 0.95,
    cap: int = 5000,
    seed: int = 0,
    reference: float | None = None,
) -> TrialResult:
    """Drive the full loop against the system until target or cap.

    Steps are 1-based: step k is the k-th evaluated configuration.
    """
    ref = reference_optimum(system) if reference is None else reference
    target = target_frac * ref
    cfg = LoopConfig(cycle_time=0.0, snapshot_window=1, settle_cycles=0)
    clock = FakeClock()
    ctrl = Controller(cfg, clock=clock, seed=seed)
    pca_id, _ = ctrl.register(system.manifest())
    names = [p.name for p in system.params]
    metric_names = system.metric_names()

    best = -math.inf
    steps_to: int | None = None
    for k in range(1, cap + 1):
        clock.advance(1.0)
        genes = ctrl.published.genes
        values = [p.grid_value(genes[name]) for name, p in zip(names, system.params)]
        raws = eval_raw(system, values)
        ctrl.submit_report(pca_id, ctrl.epoch, dict(zip(metric_names, raws)), _TS)
        ctrl.tick(clock.now())
        ctrl.ack(pca_id, ctrl.epoch)
        best = max(best, objective(system, raws))
        if best >= target:
            steps_to = k
            break
    capped = steps_to is None
    return TrialResult(
        d=system.d,
        m=system.m,
        v=system.v,
        seed=system.seed,
        steps=cap if capped else steps_to,
        capped=capped,
        best_fraction=best / ref if ref else 0.0,
        complexity=system.complexity,
    )


CSV_HEADER = ["complexity", "d", "m", "v", "rep", "steps", "capped"]


def _run_cell(args: tuple) -> tuple:
    d, m, v, rep, seed, target_frac, cap = args
    system = gen_problem(d, m, v, seed)
    r = run_trial(system, target_frac=target_frac, cap=cap, seed=seed)
    return (r.complexity, d, m, v, rep, r.steps, 1 if r.capped else 0)


def sweep_cells(
    d_list: Sequence[int],
    m_list: Sequence[int],
    v_list: Sequence[int],
    reps: int,
    seed0: int,
    target_frac: float = 0.95,
    cap: int = 5000,
) -> list[tuple]:
    cells = []
    index = 0
    for d in d_list:
        for m in m_list:
            for v in v_list:
                for rep in range(reps):
                    cells.append((d, m, v, rep, seed0 + index, target_frac, cap))
                    index += 1
    return cells


def run_sweep(
    d_list: Sequence[int],
    m_list: Sequence[int],
    v_list: Sequence[int],
    reps: int,
    seed0: int,
    out_path: str | Path,
    jobs: int = 1,
    target_frac: float = 0.95,
    cap: int = 5000,
    progress=None,
) -> list[tuple]:
    """Run the grid, streaming rows to CSV; finished rows survive restarts."""
    out_path = Path(out_path)
    done: dict[tuple, tuple] = {}
    if out_path.exists():
        with out_path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is not None and header != CSV_HEADER:
                raise ValidationError(f"unexpected CSV header in {out_path}")
            for row in reader:
                complexity, d, m, v, rep, steps, capped = (int(x) for x in row)
                done[(d, m, v, rep)] = (complexity, d, m, v, rep, steps, capped)

    cells = sweep_cells(d_list, m_list, v_list, reps, seed0, target_frac, cap)
    pending = [c for c in cells if (c[0], c[1], c[2], c[3]) not in done]

    fresh = not out_path.exists()
    results = dict(done)
    with out_path.open("a", newline="") as fh:
        writer = csv.writer(fh)
        if fresh:
            writer.writerow(CSV_HEADER)
            fh.flush()
        if pending:
            if jobs > 1:
                with ProcessPoolExecutor(max_workers=jobs) as pool:
                    rows = pool.map(_run_cell, pending, chunksize=1)
                    for row in rows:
                        writer.writerow(row)
                        fh.flush()
                        results[(row[1], row[2], row[3], row[4])] = row
                        if progress:
                            progress(row)
            else:
                for cell in pending:
                    row = _run_cell(cell)
                    writer.writerow(row)
                    fh.flush()
                    results[(row[1], row[2], row[3], row[4])] = row
                    if progress:
                        progress(row)
    return [results[(c[0], c[1], c[2], c[3])] for c in cells]


def load_sweep(path: str | Path) -> list[tuple]:
    rows = []
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_HEADER:
            raise ValidationError(f"unexpected CSV header in {path}")
        for row in reader:
            rows.append(tuple(int(x) for x in row))
    return rows
