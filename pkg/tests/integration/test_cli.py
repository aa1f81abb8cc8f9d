"""Tests for the command-line interface."""

import pandas as pd
import pytest
from click.testing import CliRunner

from slicebench.cli.main import EXIT_CONFIG, EXIT_RUNTIME, cli
from slicebench.core.domain.settings import dumps_config, save_config


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def tiny_file(tiny_config, tmp_path):
    return save_config(tiny_config, tmp_path / "tiny.toml")


@pytest.fixture
def trained(runner, tiny_file, tmp_path):
    """Run directory of a finished 200-step training run."""
    out = tmp_path / "runs"
    result = runner.invoke(
        cli,
        ["train", "--config", str(tiny_file), "--out-dir", str(out), "--run-name", "tiny"],
    )
    assert result.exit_code == 0, result.output
    return out / "tiny"


def test_validate_config_on_presets(runner):
    for preset in ("paper", "latency", "desk"):
        result = runner.invoke(cli, ["validate-config", "--preset", preset])
        assert result.exit_code == 0
        assert f"{preset} is valid" in result.output


def test_validate_config_dump_prints_toml(runner):
    result = runner.invoke(cli, ["validate-config", "--preset", "desk", "--dump"])
    assert result.exit_code == 0
    assert "[channel]" in result.output


def test_missing_key_exits_with_config_code(runner, desk_config, tmp_path):
    broken = tmp_path / "broken.toml"
    broken.write_text(dumps_config(desk_config).replace("delta = 0.5\n", ""))
    result = runner.invoke(cli, ["validate-config", "--config", str(broken)])
    assert result.exit_code == EXIT_CONFIG
    assert "compute.delta" in result.output


def test_config_and_preset_together_rejected(runner, tiny_file):
    result = runner.invoke(cli, ["validate-config", "--config", str(tiny_file), "--preset", "desk"])
    assert result.exit_code == EXIT_CONFIG


def test_train_writes_run_directory(trained):
    for name in ("metrics.csv", "evaluations.csv", "manifest.json", "config.toml"):
        assert (trained / name).exists()
    assert sorted(p.stem for p in (trained / "checkpoints").glob("*.npz"))[-1] == "t000000200"


def test_eval_is_repeatable(runner, tiny_file, trained, tmp_path):
    """Test that evaluating one checkpoint twice records identical scores."""
    scores = tmp_path / "scores.csv"
    for _ in range(2):
        result = runner.invoke(
            cli,
            ["eval", "--config", str(tiny_file), "--checkpoint", str(trained), "--output", str(scores)],
        )
        assert result.exit_code == 0, result.output
        assert "score" in result.output
    rows = pd.read_csv(scores)
    assert len(rows) == 2
    assert rows.loc[0, "score"] == rows.loc[1, "score"]
    assert rows.loc[0, "returns"] == rows.loc[1, "returns"]


def test_eval_missing_checkpoint_exits_with_runtime_code(runner, tiny_file, tmp_path):
    result = runner.invoke(
        cli, ["eval", "--config", str(tiny_file), "--checkpoint", str(tmp_path / "none.npz")]
    )
    assert result.exit_code == EXIT_RUNTIME


def test_eval_wrong_agent_exits_with_runtime_code(runner, tiny_file, trained):
    result = runner.invoke(
        cli,
        ["eval", "--config", str(tiny_file), "--checkpoint", str(trained), "--agent", "td3"],
    )
    assert result.exit_code == EXIT_RUNTIME


def test_export_evaluation_scores(runner, trained, tmp_path):
    out = tmp_path / "curve.csv"
    result = runner.invoke(
        cli,
        ["export", str(trained), "--output", str(out), "--source", "evaluations", "--metric", "score"],
    )
    assert result.exit_code == 0, result.output
    curve = pd.read_csv(out)
    evaluations = pd.read_csv(trained / "evaluations.csv")
    assert curve["timestep"].tolist() == [0, 100, 200]
    assert curve["mean"].tolist() == pytest.approx(evaluations["score"].tolist())


def test_export_rejects_zero_window(runner, trained, tmp_path):
    result = runner.invoke(
        cli, ["export", str(trained), "--output", str(tmp_path / "c.csv"), "--window", "0"]
    )
    assert result.exit_code != 0
