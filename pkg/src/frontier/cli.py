"""
Command-Line Interface for frontier-pm.

Usage:
    frontier help                    - Show available commands
    frontier help <command>          - Show help for a command
    frontier validate --config FILE  - Check a run configuration
    frontier backtest --config FILE  - Backtest one strategy
    frontier sweep --config FILE     - Sweep investor preferences
    frontier frontier --points CSV   - Recompute Pareto and mean frontiers
    frontier synth --out DIR         - Write a synthetic market
"""

import asyncio
import json
import logging
import sys
from collections import defaultdict
from dataclasses import replace
from pathlib import Path

import click

from .backtest import run_backtest
from .config import RunConfig, apply_overrides, load_config, validate_config, write_run_artifacts
from .data import load_panel, write_panel
from .errors import ConfigError, DataError, DisjointSupportError, FrontierError
from .market import MarketContext
from .optimizer import InvestorPreferences
from .plot import write_chart
from .sweep import (
    FAMILIES,
    FrontierPoint,
    MeanFrontier,
    SweepSettings,
    SweepTask,
    build_strategy,
    family_name,
    frontiers_by_seed,
    mean_frontier,
    parse_family,
    read_points_csv,
    run_sweep_async,
    write_mean_frontier_csv,
    write_points_csv,
)
from .synthetic import MarketRegime, generate_market

logger = logging.getLogger(__name__)

CHART_FILE = "frontier.svg"


def _configure_logging(debug: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if debug else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def _split_families(ctx, param, value):
    """Accept ``--families ew,spo`` as well as repeated ``--families`` flags."""
    if not value:
        return None
    names = tuple(name.strip() for item in value for name in item.split(",") if name.strip())
    unknown = [name for name in names if name not in FAMILIES]
    if unknown:
        raise click.BadParameter(
            f"unknown family {unknown[0]!r} (expected one of: {', '.join(FAMILIES)})"
        )
    return names


def _load(config_path: str, **overrides) -> RunConfig:
    """Load, override and validate; raises ConfigError listing every diagnostic."""
    config = apply_overrides(load_config(config_path), **overrides)
    problems = validate_config(config)
    if problems:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(str(p) for p in problems))
    return config


def _prepare(config: RunConfig) -> tuple[MarketContext, SweepSettings]:
    """Load the panel and build the market context and task settings for ``config``."""
    panel = load_panel(
        config.data.path,
        assets=config.data.assets or None,
        risk_free_file=config.data.risk_free_file,
    )
    train_range, test_range = config.period.indices(panel)
    context = MarketContext.build(
        panel,
        forecast_cfg=config.forecast,
        seed=config.sweep.seed,
        baseline_end=train_range[0],
        n_factors=config.risk.factors,
        covariance_window=config.risk.window,
    )
    settings = SweepSettings(
        test_range=test_range,
        train_range=train_range,
        cost_params=config.costs,
        training=config.training,
        horizon=config.forecast.horizon,
        tol=config.solver.tol,
        max_iter=config.solver.max_iter,
    )
    return context, settings


def _fail(message: str) -> None:
    click.echo(f"Error: {message}", err=True)
    sys.exit(1)


def _write_frontiers(
    points: list[FrontierPoint], out_dir: Path, name: str
) -> tuple[list[Path], list[MeanFrontier]]:
    """Per-seed Pareto CSV and, with two or more seeds, the mean frontier CSV."""
    written = []
    by_seed = frontiers_by_seed(points)
    pareto = [p for frontier in by_seed.values() for p in frontier.points]
    written.append(write_points_csv(pareto, out_dir / f"frontier_{name}.csv"))
    means = []
    if len(by_seed) >= 2:
        try:
            mean = mean_frontier(list(by_seed.values()), family=name)
        except DisjointSupportError as e:
            click.echo(f"Warning: no mean frontier for {name}: {e}", err=True)
        else:
            means.append(mean)
            written.append(write_mean_frontier_csv([mean], out_dir / f"mean_{name}.csv"))
    return written, means


@click.group()
@click.option("--debug/--no-debug", default=False, help="Enable debug output")
@click.pass_context
def main(ctx, debug):
    """Portfolio research engine: SPO/MPO optimisation vs FRONTIER policies."""
    ctx.ensure_object(dict)
    ctx.obj["debug"] = debug
    _configure_logging(debug)


@main.command("help")
@click.argument("command_name", required=False)
@click.pass_context
def help_command(ctx, command_name):
    """Show help for a command.

    Examples:
        frontier help          Show all available commands
        frontier help sweep    Show help for the sweep command
    """
    if command_name is None:
        click.echo(main.get_help(ctx.parent))
        return

    cmd = main.get_command(ctx, command_name)
    if cmd is None:
        click.echo(f"Error: No such command '{command_name}'.", err=True)
        click.echo("\nAvailable commands:", err=True)
        for name in sorted(main.list_commands(ctx)):
            click.echo(f"  {name}", err=True)
        ctx.exit(1)

    with click.Context(cmd, info_name=command_name, parent=ctx.parent) as sub_ctx:
        click.echo(cmd.get_help(sub_ctx))


@main.command()
@click.option("--config", "config_path", required=True, help="Run configuration (TOML)")
def validate(config_path):
    """Check a configuration without running anything.

    Prints OK, or one line per problem and exits nonzero.
    """
    try:
        config = apply_overrides(load_config(config_path))
    except ConfigError as e:
        _fail(str(e))

    problems = validate_config(config)
    if not problems:
        click.echo("OK")
        return
    for problem in problems:
        click.echo(str(problem), err=True)
    sys.exit(1)


@main.command()
@click.option("--config", "config_path", required=True, help="Run configuration (TOML)")
@click.option(
    "--family",
    type=click.Choice(FAMILIES),
    default="ew",
    show_default=True,
    help="Strategy family to backtest",
)
@click.option("--gamma-risk", type=click.FloatRange(min=0), default=1.0, show_default=True, help="Risk aversion")
@click.option("--gamma-trade", type=click.FloatRange(min=0), default=1.0, show_default=True, help="Trade aversion")
@click.option("--seed", type=int, default=None, help="Master seed (overrides FRONTIER_SEED)")
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory")
def backtest(config_path, family, gamma_risk, gamma_trade, seed, out):
    """Backtest one strategy over the test range.

    Writes backtest_<family>.csv (one row per date and asset) and
    summary_<family>.json to the output directory. FRONTIER families are
    trained on the training range first.
    """
    try:
        config = _load(config_path, families=(family,), seed=seed, out=out)
        context, settings = _prepare(config)
        base, variant = parse_family(family)
        prefs = None if base == "ew" else InvestorPreferences(gamma_risk, gamma_trade)
        task = SweepTask(base, variant, prefs, config.sweep.seed, settings)

        click.echo(f"Backtesting {family} on {len(context)} dates...")
        seeded = context.with_seed(task.seed)
        strategy = build_strategy(task, seeded)
        result = run_backtest(strategy, seeded, settings.test_range, config.costs)

        out_dir = config.output_dir
        write_run_artifacts(config, out_dir)
        csv_path = result.to_csv(out_dir / f"backtest_{family}.csv")
        summary_path = out_dir / f"summary_{family}.json"
        summary = {"family": family, "seed": task.seed, **result.summary.to_dict()}
        if prefs is not None:
            summary["gamma_risk"], summary["gamma_trade"] = prefs.as_tuple()
        summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    except ConfigError as e:
        _fail(str(e))
    except DataError as e:
        _fail(f"data: {e}")
    except FrontierError as e:
        _fail(f"{family} backtest failed: {e}")

    s = result.summary
    sharpe = "undefined" if s.sharpe is None else f"{s.sharpe:.4f}"
    click.echo(f"Excess return: {s.excess_return:.6g}/day")
    click.echo(f"Excess risk:   {s.excess_risk:.6g}/day")
    click.echo(f"Sharpe ratio:  {sharpe}")
    click.echo(f"Wrote {csv_path}")
    click.echo(f"Wrote {summary_path}")


@main.command()
@click.option("--config", "config_path", required=True, help="Run configuration (TOML)")
@click.option(
    "--families",
    multiple=True,
    callback=_split_families,
    help="Strategy families, comma separated or repeated (overrides config)",
)
@click.option("--seeds", type=click.IntRange(min=1), default=None, help="Number of seeds")
@click.option("--seed", type=int, default=None, help="Master seed (overrides FRONTIER_SEED)")
@click.option("--jobs", type=click.IntRange(min=1), default=None, help="Concurrent tasks")
@click.option("--grid", type=click.Choice(["full", "small"]), default=None, help="Preference grid")
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory")
@click.option("--png", is_flag=True, help="Also render the chart as PNG")
@click.option("--save-models", is_flag=True, help="Keep trained FRONTIER networks under models/")
def sweep(config_path, families, seeds, seed, jobs, grid, out, png, save_models):
    """Sweep the preference grid for each strategy family.

    For every family writes points_<family>.csv (all tasks),
    frontier_<family>.csv (per-seed Pareto points) and, with two or more
    seeds, mean_<family>.csv. A chart of all families goes to frontier.svg.
    Failed (pair, seed) tasks are listed and the exit status is nonzero.
    """
    try:
        config = _load(
            config_path, families=families, seeds=seeds, jobs=jobs, out=out, grid=grid, seed=seed
        )
        context, settings = _prepare(config)
    except ConfigError as e:
        _fail(str(e))
    except DataError as e:
        _fail(f"data: {e}")
    except FrontierError as e:
        _fail(str(e))

    out_dir = config.output_dir
    if save_models:
        settings = replace(settings, model_dir=str(out_dir / "models"))
    sweep_cfg = config.sweep
    sweep_grid = sweep_cfg.sweep_grid()
    seed_list = sweep_cfg.seed_list()

    async def _sweep():
        outcomes = {}
        for family in sweep_cfg.families:
            click.echo(f"Sweeping {family}: {len(sweep_grid)} pair(s) x {len(seed_list)} seed(s)...")
            outcomes[family] = await run_sweep_async(
                family, context, sweep_grid, seed_list, settings, jobs=sweep_cfg.jobs
            )
        return outcomes

    try:
        outcomes = asyncio.run(_sweep())
    except Exception as e:
        _fail(f"sweep aborted: {type(e).__name__}: {e}")

    write_run_artifacts(config, out_dir)
    all_points, all_means = [], []
    failures = []
    for family, outcome in outcomes.items():
        failures += [(family, *f) for f in outcome.failures]
        if not outcome.points:
            continue
        write_points_csv(outcome.points, out_dir / f"points_{family}.csv")
        paths, means = _write_frontiers(outcome.points, out_dir, family)
        all_points += outcome.points
        all_means += means
        for path in paths:
            click.echo(f"Wrote {path}")
    if all_points:
        for path in write_chart(all_points, out_dir / CHART_FILE, all_means, png=png):
            click.echo(f"Wrote {path}")

    if failures:
        click.echo(f"\n{len(failures)} task(s) failed:", err=True)
        for family, gr, gt, task_seed, message in failures:
            click.echo(
                f"  {family} gamma_risk={gr:g} gamma_trade={gt:g} seed={task_seed}: {message}",
                err=True,
            )
        sys.exit(1)


@main.command("frontier")
@click.option(
    "--points",
    "points_paths",
    multiple=True,
    required=True,
    type=click.Path(exists=True, dir_okay=False),
    help="Points CSV written by sweep (repeatable)",
)
@click.option("--out", type=click.Path(file_okay=False), required=True, help="Output directory")
@click.option("--png", is_flag=True, help="Also render the chart as PNG")
def frontier_command(points_paths, out, png):
    """Recompute Pareto and mean frontiers from stored points.

    Re-rendering from the CSVs a sweep wrote reproduces its chart exactly.
    """
    out_dir = Path(out)
    try:
        points = [p for path in points_paths for p in read_points_csv(path)]
    except (OSError, ValueError, KeyError) as e:
        _fail(f"cannot read points: {e}")
    if not points:
        _fail("no points found")

    out_dir.mkdir(parents=True, exist_ok=True)
    groups = defaultdict(list)
    for p in points:
        groups[family_name(p.family, p.variant)].append(p)
    all_means = []
    for name in sorted(groups):
        paths, means = _write_frontiers(groups[name], out_dir, name)
        all_means += means
        for path in paths:
            click.echo(f"Wrote {path}")
    for path in write_chart(points, out_dir / CHART_FILE, all_means, png=png):
        click.echo(f"Wrote {path}")


@main.command()
@click.option("--out", type=click.Path(file_okay=False), required=True, help="Directory for CSVs")
@click.option("--assets", type=click.IntRange(1, 500), default=5, show_default=True, help="Risky assets")
@click.option("--days", type=click.IntRange(2), default=1000, show_default=True, help="Trading days")
@click.option(
    "--regime",
    type=click.Choice([r.value for r in MarketRegime]),
    default=MarketRegime.UPWARD.value,
    show_default=True,
    help="Market trend",
)
@click.option("--seed", type=int, default=0, show_default=True, help="Random seed")
@click.option("--start", default="2010-01-04", show_default=True, help="First trading day")
def synth(out, assets, days, regime, seed, start):
    """Write a synthetic market (one CSV per asset plus risk_free.csv)."""
    try:
        panel = generate_market(
            n_assets=assets, n_days=days, regime=MarketRegime(regime), seed=seed, start_date=start
        )
        paths = write_panel(panel, out)
    except (FrontierError, ValueError) as e:
        _fail(str(e))

    click.echo(
        f"Wrote {len(paths)} file(s) to {out}: {panel.n_risky} assets, "
        f"{len(panel)} days ({panel.dates[0].date()} .. {panel.dates[-1].date()})"
    )


if __name__ == "__main__":
    main()
