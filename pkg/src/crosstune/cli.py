"""Command-line entry points: serve the tuner, run sweeps, render reports."""

from __future__ import annotations

import sys

import click

from .model import ValidationError

FULL_DIMS = [5, 10, 20, 30, 40]
FULL_VALUES = [10, 100, 2000, 5000, 10000]
FULL_REPS = 1000

EXIT_CONFIG = 2
EXIT_ENVIRONMENT = 3


def _ints(text: str) -> list[int]:
    try:
        out = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise click.UsageError(f"expected comma-separated integers, got {text!r}")
    if not out:
        raise click.UsageError("list must be non-empty")
    return out


@click.group()
def main() -> None:
    """Cross-layer configuration tuner."""


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None, help="JSON config file.")
@click.option("--bind", default=None, help="host:port to listen on (default 127.0.0.1:8666).")
@click.option("--history", "history_path", type=click.Path(), default=None, help="History JSONL file; enables durable resume.")
@click.option("--stats-log", type=click.Path(), default=None, help="Append per-step runtime stats as JSONL.")
@click.option("--seed", default=0, show_default=True, help="Tuner RNG seed.")
def serve(config_path, bind, history_path, stats_log, seed) -> None:
    """Run the controller and its HTTP interface until interrupted."""
    import dataclasses

    import uvicorn

    from .config import load_cli_config
    from .controller import Controller
    from .server import create_app

    try:
        cfg = load_cli_config(config_path)
        if bind:
            cfg = dataclasses.replace(cfg, bind=bind)
        overrides = {}
        if history_path:
            overrides["history_path"] = history_path
        if stats_log:
            overrides["stats_path"] = stats_log
        if overrides:
            cfg = dataclasses.replace(cfg, loop=dataclasses.replace(cfg.loop, **overrides))
        host, port = cfg.host, cfg.port
    except ValidationError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)

    controller = Controller(cfg.loop, seed=seed, tuner_params=cfg.tuner, schedule=cfg.schedule)
    app = create_app(controller)
    server = uvicorn.Server(uvicorn.Config(app, host=host, port=port, log_level="warning"))

    # this uvicorn build leaves signal dispositions alone, so install our own:
    # flag the server down and let lifespan teardown persist and close the loop
    import signal

    def _graceful(signum, frame):
        server.should_exit = True

    signal.signal(signal.SIGTERM, _graceful)
    signal.signal(signal.SIGINT, _graceful)
    server.run()
    if not server.started:  # bind failure and friends
        sys.exit(EXIT_ENVIRONMENT)


@main.command()
@click.option("--params", default="5,10", show_default=True, help="Comma list of parameter counts.")
@click.option("--metrics", default="5,10", show_default=True, help="Comma list of metric counts.")
@click.option("--values", default="10,100", show_default=True, help="Comma list of values per parameter.")
@click.option("--reps", default=100, show_default=True, help="Trials per grid cell.")
@click.option("--seed", default=1, show_default=True, help="Base seed; trial i uses seed+i.")
@click.option("--out", "out_path", type=click.Path(), required=True, help="CSV output (restartable).")
@click.option("--jobs", default=1, show_default=True, help="Parallel worker processes.")
@click.option("--cap", default=5000, show_default=True, help="Step cap per trial.")
@click.option("--target", default=0.95, show_default=True, help="Fraction of the reference optimum to reach.")
@click.option("--full-grid", is_flag=True, help=f"Use the complete grid d,m in {FULL_DIMS}, v in {FULL_VALUES}, reps={FULL_REPS} (long-running).")
def bench(params, metrics, values, reps, seed, out_path, jobs, cap, target, full_grid) -> None:
    """Run synthetic tuning trials over a complexity grid, streaming CSV."""
    from .benchmark import run_sweep

    if full_grid:
        d_list, m_list, v_list, reps = FULL_DIMS, FULL_DIMS, FULL_VALUES, FULL_REPS
    else:
        d_list, m_list, v_list = _ints(params), _ints(metrics), _ints(values)

    done = 0

    def progress(row) -> None:
        nonlocal done
        done += 1
        if done % 50 == 0:
            click.echo(f"  {done} trials finished", err=True)

    try:
        rows = run_sweep(
            d_list, m_list, v_list, reps, seed, out_path,
            jobs=jobs, target_frac=target, cap=cap, progress=progress,
        )
    except ValidationError as exc:
        click.echo(f"bench error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except OSError as exc:
        click.echo(f"cannot write {out_path}: {exc}", err=True)
        sys.exit(EXIT_ENVIRONMENT)

    n = len(rows)
    within = sum(1 for r in rows if r[5] <= 1000 and not r[6])
    capped = sum(r[6] for r in rows)
    click.echo(f"trials: {n}")
    click.echo(f"within 1000 steps: {within}/{n} ({100.0 * within / n:.1f}%)")
    click.echo(f"capped at {cap}: {capped}/{n} ({100.0 * capped / n:.1f}%)")


@main.command()
@click.option("--history", "history_path", type=click.Path(), default=None, help="History JSONL to summarize.")
@click.option("--sweep", "sweep_path", type=click.Path(), default=None, help="Sweep CSV to summarize.")
@click.option("--out", "out_dir", type=click.Path(), required=True, help="Directory for tables and plots.")
@click.option("--group", default=None, type=int, help="Steps per box group (default: 25 long runs, 5 short).")
def report(history_path, sweep_path, out_dir, group) -> None:
    """Render CSV tables and SVG plots from a history or sweep file."""
    from .history import HistoryCorruptError
    from .reporting import render_history_report, render_sweep_report

    if not history_path and not sweep_path:
        raise click.UsageError("need --history and/or --sweep")
    written = []
    try:
        if history_path:
            written += render_history_report(history_path, out_dir, group)
        if sweep_path:
            written += render_sweep_report(sweep_path, out_dir)
    except (ValidationError, HistoryCorruptError, FileNotFoundError) as exc:
        click.echo(f"report error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except OSError as exc:
        click.echo(f"cannot write report: {exc}", err=True)
        sys.exit(EXIT_ENVIRONMENT)
    for path in written:
        click.echo(str(path))


if __name__ == "__main__":
    main()
