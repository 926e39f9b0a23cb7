"""Static report rendering: CSV tables and SVG plots from history/sweep files.

Outputs are plain files; nothing here touches the live loop. SVGs are written
by hand (a polyline or a row of boxes is not worth a plotting dependency) and
are deterministic for identical inputs.
"""

from __future__ import annotations

import csv
import statistics
from pathlib import Path
from typing import Sequence

from .benchmark import load_sweep
from .history import load_history
from .model import StateRecord

LONG_RUN_GROUP = 25
SHORT_RUN_GROUP = 5
# history shorter than this uses the small group size
LONG_RUN_THRESHOLD = 5 * LONG_RUN_GROUP


def pick_group_size(n_records: int) -> int:
    return LONG_RUN_GROUP if n_records >= LONG_RUN_THRESHOLD else SHORT_RUN_GROUP


def quartiles(values: Sequence[float]) -> tuple[float, float, float, float, float]:
    ordered = sorted(values)
    med = statistics.median(ordered)
    half = len(ordered) // 2
    lower = ordered[:half] or ordered[:1]
    upper = ordered[-half:] if half else ordered[-1:]
    return ordered[0], statistics.median(lower), med, statistics.median(upper), ordered[-1]


def metric_box_rows(records: list[StateRecord], group: int) -> list[tuple]:
    """(metric, group_start, count, min, q1, median, q3, max) per step group."""
    by_metric: dict[str, list[tuple[int, float]]] = {}
    for rec in records:
        for name, value in rec.snapshot.metrics.items():
            by_metric.setdefault(name, []).append((rec.step_index, value))
    rows = []
    for name in sorted(by_metric):
        series = sorted(by_metric[name])
        starts: dict[int, list[float]] = {}
        for step, value in series:
            starts.setdefault((step // group) * group, []).append(value)
        for start in sorted(starts):
            lo, q1, med, q3, hi = quartiles(starts[start])
            rows.append((name, start, len(starts[start]), lo, q1, med, q3, hi))
    return rows


def best_trajectory(records: list[StateRecord]) -> list[tuple[int, float]]:
    best = None
    out = []
    for rec in sorted(records, key=lambda r: r.step_index):
        best = rec.score if best is None else max(best, rec.score)
        out.append((rec.step_index, best))
    return out


def complexity_table(rows: list[tuple]) -> list[tuple]:
    """(complexity, d, m, v, trials, median, q1, q3, capped_frac) per cell."""
    cells: dict[tuple, list[tuple[int, int]]] = {}
    for complexity, d, m, v, _rep, steps, capped in rows:
        cells.setdefault((complexity, d, m, v), []).append((steps, capped))
    out = []
    for key in sorted(cells):
        steps = [s for s, _ in cells[key]]
        capped = sum(c for _, c in cells[key])
        _, q1, med, q3, _ = quartiles(steps)
        out.append((*key, len(steps), med, q1, q3, capped / len(steps)))
    return out


def cdf_table(rows: list[tuple]) -> list[tuple[int, float]]:
    steps = sorted(r[5] for r in rows)
    out = []
    n = len(steps)
    i = 0
    while i < n:
        j = i
        while j < n and steps[j] == steps[i]:
            j += 1
        out.append((steps[i], j / n))
        i = j
    return out


def _write_csv(path: Path, header: list[str], rows: list[tuple]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


# -- SVG helpers ---------------------------------------------------------------

_W, _H, _PAD = 640, 360, 45


def _scale(points: list[tuple[float, float]]):
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1

    def to_px(x, y):
        px = _PAD + (x - x0) / (x1 - x0) * (_W - 2 * _PAD)
        py = _H - _PAD - (y - y0) / (y1 - y0) * (_H - 2 * _PAD)
        return round(px, 2), round(py, 2)

    return to_px, (x0, x1, y0, y1)


def _svg(body: list[str], title: str) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="11">\n'
        f'<rect width="{_W}" height="{_H}" fill="white"/>\n'
        f'<text x="{_W // 2}" y="18" text-anchor="middle" font-size="14">{title}</text>\n'
    )
    axes = (
        f'<line x1="{_PAD}" y1="{_H - _PAD}" x2="{_W - _PAD}" y2="{_H - _PAD}" stroke="black"/>\n'
        f'<line x1="{_PAD}" y1="{_PAD}" x2="{_PAD}" y2="{_H - _PAD}" stroke="black"/>\n'
    )
    return head + axes + "\n".join(body) + "\n</svg>\n"


def svg_line(points: list[tuple[float, float]], title: str, path: Path) -> None:
    if not points:
        path.write_text(_svg([], title + " (no data)"))
        return
    to_px, (x0, x1, y0, y1) = _scale(points)
    pts = " ".join(f"{px},{py}" for px, py in (to_px(x, y) for x, y in points))
    body = [
        f'<polyline points="{pts}" fill="none" stroke="#1f6fb2" stroke-width="1.5"/>',
        f'<text x="{_PAD}" y="{_H - _PAD + 16}">{x0:g}</text>',
        f'<text x="{_W - _PAD}" y="{_H - _PAD + 16}" text-anchor="end">{x1:g}</text>',
        f'<text x="{_PAD - 4}" y="{_H - _PAD}" text-anchor="end">{y0:g}</text>',
        f'<text x="{_PAD - 4}" y="{_PAD + 4}" text-anchor="end">{y1:g}</text>',
    ]
    path.write_text(_svg(body, title))


def svg_boxes(rows: list[tuple], title: str, path: Path) -> None:
    """rows: (label, min, q1, median, q3, max), drawn left to right."""
    if not rows:
        path.write_text(_svg([], title + " (no data)"))
        return
    lo = min(r[1] for r in rows)
    hi = max(r[5] for r in rows)
    if hi == lo:
        hi = lo + 1
    n = len(rows)
    slot = (_W - 2 * _PAD) / n
    width = min(24.0, slot * 0.6)

    def ypix(v):
        return round(_H - _PAD - (v - lo) / (hi - lo) * (_H - 2 * _PAD), 2)

    body = []
    for i, (label, mn, q1, med, q3, mx) in enumerate(rows):
        cx = _PAD + slot * (i + 0.5)
        x0 = round(cx - width / 2, 2)
        body.append(
            f'<line x1="{round(cx, 2)}" y1="{ypix(mn)}" x2="{round(cx, 2)}" y2="{ypix(mx)}" stroke="#444"/>'
        )
        body.append(
            f'<rect x="{x0}" y="{ypix(q3)}" width="{round(width, 2)}" '
            f'height="{round(max(ypix(q1) - ypix(q3), 0.5), 2)}" fill="#9ecae8" stroke="#1f6fb2"/>'
        )
        body.append(
            f'<line x1="{x0}" y1="{ypix(med)}" x2="{round(x0 + width, 2)}" y2="{ypix(med)}" '
            f'stroke="#0b3d61" stroke-width="1.5"/>'
        )
        if n <= 40:
            body.append(
                f'<text x="{round(cx, 2)}" y="{_H - _PAD + 16}" text-anchor="middle">{label}</text>'
            )
    body.append(f'<text x="{_PAD - 4}" y="{_H - _PAD}" text-anchor="end">{lo:g}</text>')
    body.append(f'<text x="{_PAD - 4}" y="{_PAD + 4}" text-anchor="end">{hi:g}</text>')
    path.write_text(_svg(body, title))


# -- top-level renderers ---------------------------------------------------------

def render_history_report(history_path: str | Path, out_dir: str | Path, group: int | None = None) -> list[Path]:
    records, _ = load_history(history_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    group = group or pick_group_size(len(records))
    written = []

    boxes = metric_box_rows(records, group)
    p = out / "metric_boxes.csv"
    _write_csv(p, ["metric", "group_start", "count", "min", "q1", "median", "q3", "max"], boxes)
    written.append(p)
    for metric in sorted({r[0] for r in boxes}):
        rows = [(r[1], r[3], r[4], r[5], r[6], r[7]) for r in boxes if r[0] == metric]
        p = out / f"metric_{metric}.svg"
        svg_boxes(rows, f"{metric} by step group ({group})", p)
        written.append(p)

    traj = best_trajectory(records)
    p = out / "best_score.csv"
    _write_csv(p, ["step_index", "best_score"], traj)
    written.append(p)
    p = out / "best_score.svg"
    svg_line([(float(s), v) for s, v in traj], "best score so far", p)
    written.append(p)
    return written


def render_sweep_report(sweep_path: str | Path, out_dir: str | Path) -> list[Path]:
    rows = load_sweep(sweep_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    table = complexity_table(rows)
    p = out / "steps_by_complexity.csv"
    _write_csv(
        p,
        ["complexity", "d", "m", "v", "trials", "median_steps", "q1", "q3", "capped_frac"],
        table,
    )
    written.append(p)
    p = out / "steps_by_complexity.svg"
    svg_boxes(
        [(t[0], t[6], t[6], t[5], t[7], t[7]) for t in table],
        "steps to target by complexity (q1/median/q3)",
        p,
    )
    written.append(p)

    cdf = cdf_table(rows)
    p = out / "steps_cdf.csv"
    _write_csv(p, ["steps", "fraction"], cdf)
    written.append(p)
    p = out / "steps_cdf.svg"
    svg_line([(float(s), f) for s, f in cdf], "fraction of trials done by step", p)
    written.append(p)
    return written
