"""Experiment service: config resolution, training runs, checkpoint evaluation and export."""

import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Optional, Sequence, Union

import pandas as pd

from slicebench import __version__
from slicebench.core.domain.enums import AgentKind, RunMode
from slicebench.core.domain.exceptions import ConfigError, InsufficientDataError
from slicebench.core.domain.settings import (
    ExperimentConfig,
    load_config,
    load_preset,
    save_config,
)
from slicebench.core.services.async_runtime import run_async
from slicebench.core.services.slicing_env import SlicingEnv
from slicebench.core.services.trainer import RunResult, agent_policy, evaluate, make_agent, run_sync
from slicebench.data.models import EvaluationRecord, RunManifest
from slicebench.data.repositories.base import CsvRepository
from slicebench.data.repositories.checkpoint_repository import CheckpointRepository
from slicebench.data.repositories.metrics_repository import RunRepository
from slicebench.utils.config import Config
from slicebench.utils.seeding import time_seed

logger = logging.getLogger(__name__)

CONFIG_SNAPSHOT = "config.toml"
EXPORT_COLUMNS = ["timestep", "n_runs", "mean", "min", "max"]
EXPORT_SOURCES = {"metrics": "METRICS_FILE", "evaluations": "EVALUATIONS_FILE"}


class ExperimentService:
    """Entry points shared by the CLI and the comparison script."""

    def __init__(self, config: Optional[Config] = None):
        """Initialize experiment service.

        Args:
            config: Process configuration (output names, seeding flags)
        """
        self.config = config or Config()

    def resolve_config(
        self,
        config_path: Optional[Union[str, Path]] = None,
        preset: Optional[str] = None,
        overrides: Optional[dict[str, Any]] = None,
    ) -> ExperimentConfig:
        """Load a config file or preset and apply command-line overrides.

        Args:
            config_path: TOML file; takes precedence over preset
            preset: Shipped preset name
            overrides: Dotted-key overrides; None values are ignored

        Returns:
            Validated configuration

        Raises:
            ConfigError: If loading or re-validation fails
        """
        if config_path and preset:
            raise ConfigError("pass either a config file or a preset, not both")
        if config_path:
            experiment = load_config(config_path)
        else:
            experiment = load_preset(preset or self.config.DEFAULT_PRESET)

        applied = {k: v for k, v in (overrides or {}).items() if v is not None}
        if "runtime.seed" not in applied and self.config.TIME_SEED:
            applied["runtime.seed"] = time_seed()
            logger.info(f"Seeding from system time: {applied['runtime.seed']}")
        total = applied.get("runtime.total_timesteps")
        if total and "runtime.eval_interval" not in applied:
            # a shortened budget keeps at least the final evaluation point
            applied["runtime.eval_interval"] = min(experiment.runtime.eval_interval, total)
        if applied:
            experiment = experiment.with_overrides(applied)
        return experiment

    def train(
        self,
        experiment: ExperimentConfig,
        agent_kind: AgentKind,
        run_dir: Union[str, Path],
        mode: Optional[RunMode] = None,
    ) -> tuple[RunResult, RunManifest]:
        """Run one training job and write all of its artifacts.

        Args:
            experiment: Validated configuration
            agent_kind: Agent to train
            run_dir: Output directory for this run
            mode: Overrides runtime.mode when given

        Returns:
            (run summary, manifest)
        """
        agent_kind = AgentKind(agent_kind)
        mode = RunMode(mode or experiment.runtime.mode)
        store = RunRepository(run_dir, self.config)
        store.prepare()
        checkpoints = CheckpointRepository(store.checkpoint_dir)
        config_file = save_config(experiment, store.run_dir / CONFIG_SNAPSHOT)

        manifest = RunManifest(
            config_name=experiment.name,
            config_hash=experiment.config_hash(),
            seed=experiment.runtime.seed,
            agent=agent_kind.value,
            mode=mode.value,
            code_version=__version__,
            total_timesteps=experiment.runtime.total_timesteps,
            artifacts={**store.artifact_paths(), "config": str(config_file)},
        )
        store.manifest.save(manifest)
        logger.info(
            f"Run {store.run_dir}: {agent_kind.value} {mode.value} on {experiment.name} "
            f"(seed {manifest.seed}, config {manifest.config_hash[:12]})"
        )

        runner = run_async if mode is RunMode.ASYNC else run_sync
        result = runner(experiment, agent_kind, store, checkpoints)

        manifest = manifest.model_copy(
            update={"finished_at": datetime.utcnow(), "final_score": result.final_score}
        )
        store.manifest.save(manifest)
        return result, manifest

    def evaluate_checkpoint(
        self,
        experiment: ExperimentConfig,
        checkpoint: Union[str, Path],
        agent_kind: Optional[AgentKind] = None,
        output: Optional[Union[str, Path]] = None,
    ) -> EvaluationRecord:
        """Score a saved agent with the noiseless evaluation protocol.

        Args:
            experiment: Configuration defining the environment and protocol
            checkpoint: Checkpoint file, or a run/checkpoint directory (latest is used)
            agent_kind: Expected agent; read from the checkpoint when None
            output: CSV file the evaluation record is appended to

        Returns:
            Evaluation record

        Raises:
            CheckpointNotFoundError: If nothing is found at the path
            CheckpointFormatError: On version, agent or dimension mismatch
        """
        path = Path(checkpoint)
        if path.is_dir():
            directory = path / self.config.CHECKPOINT_DIR
            path = CheckpointRepository(directory if directory.is_dir() else path).latest()

        meta = CheckpointRepository.read_meta(path)
        kind = AgentKind(agent_kind or meta["agent"])
        if meta["config_hash"] and meta["config_hash"] != experiment.config_hash():
            logger.warning(f"Checkpoint {path.name} was produced by a different configuration")

        env = SlicingEnv(experiment)
        agent = make_agent(
            kind,
            env.observation_space.shape[0],
            env.action_space.shape[0],
            experiment,
            experiment.runtime.seed,
        )
        CheckpointRepository(path.parent).load(agent, path)

        rt = experiment.runtime
        record = evaluate(agent_policy(agent), env, rt.eval_episodes, rt.eval_top_k, rt.seed)
        if output:
            CsvRepository(EvaluationRecord, output).create(record)
        return record

    def export(
        self,
        run_dirs: Sequence[Union[str, Path]],
        output: Union[str, Path],
        metric: str = "episode_return",
        source: str = "metrics",
        window: int = 1,
    ) -> pd.DataFrame:
        """Smoothed learning curve aggregated across runs.

        Each run's series is averaged per timestep (async runs log several
        actors), smoothed with a trailing moving average of `window` points
        and then combined across runs into mean and min/max band columns.

        Args:
            run_dirs: Run directories, typically one per seed
            output: CSV file to write
            metric: Column of the source file
            source: "metrics" or "evaluations"
            window: Moving-average window in points; 1 passes values through

        Returns:
            Frame with columns timestep, n_runs, mean, min, max
        """
        if window < 1:
            raise ValueError("window must be >= 1")
        if source not in EXPORT_SOURCES:
            raise ValueError(f"unknown source {source!r}; choose from {', '.join(EXPORT_SOURCES)}")
        file_name = getattr(self.config, EXPORT_SOURCES[source])

        series = {}
        for i, run_dir in enumerate(run_dirs):
            path = Path(run_dir) / file_name
            if not path.exists():
                raise InsufficientDataError(f"no {file_name} in {run_dir}")
            frame = pd.read_csv(path)
            if metric not in frame.columns:
                raise ValueError(f"{file_name} has no column {metric!r}")
            per_step = frame.groupby("timestep")[metric].mean().sort_index()
            series[f"run{i}"] = per_step.rolling(window, min_periods=1).mean()
        if not series:
            raise InsufficientDataError("no runs to export")

        curves = pd.DataFrame(series).sort_index()
        table = pd.DataFrame(
            {
                "timestep": curves.index.astype(int),
                "n_runs": curves.count(axis=1).to_numpy(),
                "mean": curves.mean(axis=1).to_numpy(),
                "min": curves.min(axis=1).to_numpy(),
                "max": curves.max(axis=1).to_numpy(),
            },
            columns=EXPORT_COLUMNS,
        )

        output = Path(output)
        output.parent.mkdir(parents=True, exist_ok=True)
        table.to_csv(output, index=False)
        logger.info(f"Exported {len(table)} rows of {metric} from {len(series)} run(s) to {output}")
        return table
