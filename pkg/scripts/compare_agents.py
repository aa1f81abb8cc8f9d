#!/usr/bin/env python
"""Train D-TD3, TD3 and DDPG over several seeds and print a comparison table."""

import logging
import sys
from pathlib import Path

import click
import numpy as np
from rich.console import Console
from rich.table import Table

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from slicebench.core.domain.enums import AgentKind
from slicebench.core.domain.settings import PRESET_NAMES
from slicebench.core.services.experiment_service import ExperimentService
from slicebench.utils.config import get_config
from slicebench.utils.logging import setup_logging


@click.command()
@click.option("--preset", type=click.Choice(PRESET_NAMES), default="desk", show_default=True)
@click.option("--seeds", default="0,1,2", show_default=True, help="Comma-separated root seeds")
@click.option("--timesteps", type=int, default=None, help="Override the preset step budget")
@click.option("--out-dir", type=click.Path(file_okay=False), default="runs/compare", show_default=True)
@click.option("--window", type=int, default=10, show_default=True, help="Smoothing for exported curves")
def main(preset: str, seeds: str, timesteps: int, out_dir: str, window: int) -> None:
    """Compare the three agents on one preset."""
    config = get_config()
    setup_logging(config)
    logger = logging.getLogger(__name__)
    service = ExperimentService(config)
    seed_list = [int(s) for s in seeds.split(",") if s.strip()]

    table = Table(title=f"Final evaluation score on {preset} ({len(seed_list)} seeds)")
    table.add_column("agent")
    table.add_column("mean", justify="right")
    table.add_column("std", justify="right")
    table.add_column("first eval", justify="right")
    table.add_column("wall s/run", justify="right")

    for kind in AgentKind:
        finals, firsts, walls, run_dirs = [], [], [], []
        for seed in seed_list:
            experiment = service.resolve_config(
                preset=preset,
                overrides={"runtime.seed": seed, "runtime.total_timesteps": timesteps},
            )
            run_dir = Path(out_dir) / f"{kind.value}_s{seed}"
            result, _ = service.train(experiment, kind, run_dir)
            finals.append(result.final_score)
            firsts.append(result.evaluations[0].score)
            walls.append(result.wall_seconds)
            run_dirs.append(run_dir)
            logger.info(f"{kind.value} seed {seed}: final score {result.final_score:.5f}")

        service.export(
            run_dirs, Path(out_dir) / f"{kind.value}_curve.csv", "score", "evaluations", window
        )
        table.add_row(
            kind.value,
            f"{np.mean(finals):.5f}",
            f"{np.std(finals):.5f}",
            f"{np.mean(firsts):.5f}",
            f"{np.mean(walls):.1f}",
        )

    Console().print(table)


if __name__ == "__main__":
    main()
