"""Tests for the experiment service: config resolution, runs and export."""

import pandas as pd
import pytest

from slicebench.core.domain.enums import AgentKind, RunMode
from slicebench.core.domain.exceptions import (
    CheckpointNotFoundError,
    ConfigError,
    InsufficientDataError,
)
from slicebench.core.domain.settings import load_config, save_config
from slicebench.core.services.experiment_service import CONFIG_SNAPSHOT, ExperimentService


@pytest.fixture
def service(config):
    return ExperimentService(config)


def write_curve(run_dir, rows):
    run_dir.mkdir(parents=True)
    pd.DataFrame(rows, columns=["timestep", "episode_return"]).to_csv(
        run_dir / "metrics.csv", index=False
    )
    return run_dir


@pytest.fixture
def three_runs(tmp_path):
    return [
        write_curve(tmp_path / "r0", [(50, 1.0), (100, 2.0), (150, 3.0)]),
        write_curve(tmp_path / "r1", [(50, 3.0), (100, 4.0), (150, 5.0)]),
        # two actors logging the same timestep are averaged first
        write_curve(tmp_path / "r2", [(50, 2.0), (100, -1.0), (100, 1.0), (150, 4.0)]),
    ]


def test_export_window_one_passes_values_through(service, three_runs, tmp_path):
    table = service.export(three_runs[:1], tmp_path / "one.csv")
    assert table["timestep"].tolist() == [50, 100, 150]
    assert table["mean"].tolist() == [1.0, 2.0, 3.0]
    assert table["n_runs"].tolist() == [1, 1, 1]


def test_export_mean_and_band_across_runs(service, three_runs, tmp_path):
    """Test the across-run mean and min/max band against hand-computed values."""
    table = service.export(three_runs, tmp_path / "curve.csv")
    assert table["mean"].tolist() == pytest.approx([2.0, 2.0, 4.0])
    assert table["min"].tolist() == [1.0, 0.0, 3.0]
    assert table["max"].tolist() == [3.0, 4.0, 5.0]

    smoothed = service.export(three_runs, tmp_path / "smooth.csv", window=2)
    # trailing means: r0 [1, 1.5, 2.5], r1 [3, 3.5, 4.5], r2 [2, 1, 2]
    assert smoothed["mean"].tolist() == pytest.approx([2.0, 2.0, 3.0])
    assert smoothed["min"].tolist() == pytest.approx([1.0, 1.0, 2.0])
    assert smoothed["max"].tolist() == pytest.approx([3.0, 3.5, 4.5])
    written = pd.read_csv(tmp_path / "smooth.csv")
    assert list(written.columns) == ["timestep", "n_runs", "mean", "min", "max"]


def test_export_rejects_bad_input(service, three_runs, tmp_path):
    with pytest.raises(InsufficientDataError):
        service.export([tmp_path / "missing"], tmp_path / "x.csv")
    with pytest.raises(ValueError, match="no column"):
        service.export(three_runs, tmp_path / "x.csv", metric="nope")
    with pytest.raises(ValueError):
        service.export(three_runs, tmp_path / "x.csv", source="timing")
    with pytest.raises(ValueError):
        service.export(three_runs, tmp_path / "x.csv", window=0)


def test_resolve_config_sources_and_overrides(service, tiny_config, tmp_path):
    path = save_config(tiny_config, tmp_path / "tiny.toml")
    assert service.resolve_config(config_path=path) == tiny_config
    with pytest.raises(ConfigError):
        service.resolve_config(config_path=path, preset="desk")

    desk = service.resolve_config(preset="desk", overrides={"runtime.seed": None})
    assert desk.runtime.seed == 0
    short = service.resolve_config(preset="desk", overrides={"runtime.total_timesteps": 200})
    assert short.runtime.eval_interval == 200


def test_train_writes_artifacts_and_manifest(service, tiny_config, run_dir):
    result, manifest = service.train(tiny_config, AgentKind.DTD3, run_dir)
    assert manifest.final_score == result.final_score
    assert manifest.finished_at is not None
    assert manifest.mode == RunMode.SYNC.value
    assert manifest.config_hash == tiny_config.config_hash()
    assert load_config(run_dir / CONFIG_SNAPSHOT) == tiny_config
    for name in ("metrics.csv", "evaluations.csv", "updates.csv", "timing.csv", "manifest.json"):
        assert (run_dir / name).exists()

    record = service.evaluate_checkpoint(tiny_config, run_dir)
    again = service.evaluate_checkpoint(tiny_config, run_dir / "checkpoints" / "t000000200.npz")
    assert record == again
    assert record.score == pytest.approx(result.final_score)


def test_evaluate_missing_checkpoint(service, tiny_config, tmp_path):
    with pytest.raises(CheckpointNotFoundError):
        service.evaluate_checkpoint(tiny_config, tmp_path / "none.npz")
    (tmp_path / "empty").mkdir()
    with pytest.raises(CheckpointNotFoundError):
        service.evaluate_checkpoint(tiny_config, tmp_path / "empty")
