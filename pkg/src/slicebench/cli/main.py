"""CLI entry point for SliceBench."""

import functools
import logging
import sys
from pathlib import Path
from typing import Optional

import click
from rich.console import Console
from rich.table import Table

from slicebench.core.domain.enums import AgentKind, RunMode
from slicebench.core.domain.exceptions import ConfigError, SliceBenchError
from slicebench.core.domain.settings import PRESET_NAMES, dumps_config
from slicebench.core.services.experiment_service import EXPORT_SOURCES, ExperimentService
from slicebench.utils.config import Config, get_config
from slicebench.utils.logging import setup_logging

logger = logging.getLogger(__name__)

EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def handle_errors(func):
    """Map failures to exit codes with a one-line red message."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except ConfigError as e:
            click.echo(click.style(f"✗ Config error: {e}", fg="red"), err=True)
            sys.exit(EXIT_CONFIG)
        except SliceBenchError as e:
            click.echo(click.style(f"✗ Error: {e}", fg="red"), err=True)
            sys.exit(EXIT_RUNTIME)
        except Exception as e:
            logger.exception(f"Unexpected failure in {func.__name__}")
            click.echo(click.style(f"✗ Unexpected error: {e}", fg="red"), err=True)
            sys.exit(EXIT_RUNTIME)

    return wrapper


def config_options(func):
    func = click.option(
        "--preset", type=click.Choice(PRESET_NAMES), default=None, help="Shipped preset"
    )(func)
    func = click.option(
        "--config", "config_path", type=click.Path(dir_okay=False), default=None, help="TOML config file"
    )(func)
    return func


def _service(ctx: click.Context) -> ExperimentService:
    return ctx.obj["service"]


def _console() -> Console:
    return Console(width=120)


def _slice_table(title: str, record) -> Table:
    table = Table(title=title)
    table.add_column("slice")
    table.add_column("admission rate", justify="right")
    table.add_column("latency", justify="right")
    table.add_column("cpu utilization", justify="right")
    table.add_column("energy", justify="right")
    for l, values in enumerate(
        zip(
            record.slice_admission_rate,
            record.slice_latency,
            record.slice_cpu_utilization,
            record.slice_energy,
        )
    ):
        table.add_row(chr(ord("A") + l), *(f"{v:.4f}" for v in values))
    return table


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Debug logging")
@click.pass_context
def cli(ctx, verbose):
    """SliceBench - DRL network slicing on cell-free massive MIMO."""
    config = get_config()
    if verbose:
        config.LOG_LEVEL = "DEBUG"
    setup_logging(config)
    ctx.ensure_object(dict)
    ctx.obj["config"] = config
    ctx.obj["service"] = ExperimentService(config)


@cli.command()
@config_options
@click.option(
    "--agent", type=click.Choice([k.value for k in AgentKind]), default=AgentKind.DTD3.value
)
@click.option("--mode", type=click.Choice([m.value for m in RunMode]), default=None)
@click.option("--seed", type=int, default=None, help="Root seed")
@click.option("--timesteps", type=int, default=None, help="Total environment steps")
@click.option(
    "--out-dir",
    type=click.Path(file_okay=False),
    envvar="SLICEBENCH_OUT",
    default=Config.OUT_DIR,
    show_default=True,
    help="Parent directory of run directories (SLICEBENCH_OUT)",
)
@click.option("--run-name", default=None, help="Run directory name inside --out-dir")
@click.pass_context
@handle_errors
def train(ctx, config_path, preset, agent, mode, seed, timesteps, out_dir, run_name):
    """Train an agent and write metrics, checkpoints and a manifest."""
    service = _service(ctx)
    experiment = service.resolve_config(
        config_path,
        preset,
        {"runtime.seed": seed, "runtime.total_timesteps": timesteps, "runtime.mode": mode},
    )
    rt = experiment.runtime
    run_name = run_name or f"{experiment.name}_{agent}_{rt.mode.value}_s{rt.seed}"
    result, _ = service.train(experiment, AgentKind(agent), Path(out_dir) / run_name)

    table = Table(title=f"{agent} on {experiment.name} ({rt.mode.value})")
    table.add_column("timestep", justify="right")
    table.add_column("score", justify="right")
    table.add_column("mean return", justify="right")
    table.add_column("admission", justify="right")
    for record in result.evaluations:
        table.add_row(
            str(record.timestep),
            f"{record.score:.5f}",
            f"{record.mean_return:.5f}",
            f"{record.admission_rate:.3f}",
        )
    console = _console()
    console.print(table)
    console.print(
        f"{result.episodes} episodes, {result.updates} updates, "
        f"{result.wall_seconds:.1f}s, torn snapshots {result.torn_snapshots}"
    )
    click.echo(click.style(f"✓ Run written to {Path(out_dir) / run_name}", fg="green"))


@cli.command("eval")
@config_options
@click.option(
    "--checkpoint",
    type=click.Path(),
    required=True,
    help="Checkpoint file or run directory (latest checkpoint)",
)
@click.option("--agent", type=click.Choice([k.value for k in AgentKind]), default=None)
@click.option("--seed", type=int, default=None, help="Root seed for evaluation episodes")
@click.option("--output", type=click.Path(dir_okay=False), default=None, help="Append the score to this CSV")
@click.pass_context
@handle_errors
def eval_cmd(ctx, config_path, preset, checkpoint, agent, seed, output):
    """Evaluate a checkpoint with the best-k-of-n protocol."""
    service = _service(ctx)
    experiment = service.resolve_config(config_path, preset, {"runtime.seed": seed})
    record = service.evaluate_checkpoint(
        experiment, checkpoint, AgentKind(agent) if agent else None, output
    )
    console = _console()
    console.print(f"score {record.score:.6f}  mean return {record.mean_return:.6f}")
    console.print("returns " + ", ".join(f"{r:.6f}" for r in record.returns))
    console.print(_slice_table("per-slice KPIs", record))


@cli.command()
@click.argument("run_dirs", nargs=-1, required=True, type=click.Path(file_okay=False))
@click.option("--output", type=click.Path(dir_okay=False), required=True)
@click.option("--metric", default="episode_return", show_default=True)
@click.option("--source", type=click.Choice(list(EXPORT_SOURCES)), default="metrics", show_default=True)
@click.option("--window", type=click.IntRange(min=1), default=1, show_default=True)
@click.pass_context
@handle_errors
def export(ctx, run_dirs, output, metric, source, window):
    """Export a smoothed learning curve with a min/max band across runs."""
    table = _service(ctx).export(run_dirs, output, metric, source, window)
    click.echo(click.style(f"✓ Wrote {len(table)} rows to {output}", fg="green"))


@cli.command("validate-config")
@config_options
@click.option("--dump", is_flag=True, help="Print the normalized TOML")
@click.pass_context
@handle_errors
def validate_config(ctx, config_path, preset, dump):
    """Check a configuration against the schema."""
    experiment = _service(ctx).resolve_config(config_path, preset)
    if dump:
        click.echo(dumps_config(experiment))
    click.echo(
        click.style(f"✓ {experiment.name} is valid (hash {experiment.config_hash()[:12]})", fg="green")
    )


def main(argv: Optional[list[str]] = None) -> None:
    cli.main(args=argv, obj={}, prog_name="slicebench")


if __name__ == "__main__":
    main()
