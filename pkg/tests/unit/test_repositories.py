"""Tests for run artifact and checkpoint repositories."""

import numpy as np
import pytest

from slicebench.core.algorithms.baselines import Td3Agent
from slicebench.core.algorithms.dtd3 import DistributionalTd3Agent
from slicebench.core.domain.exceptions import CheckpointFormatError, CheckpointNotFoundError
from slicebench.data.models import EvaluationRecord, MetricsRecord, RunManifest, UpdateRecord
from slicebench.data.repositories import CheckpointRepository, CsvRepository, RunRepository


@pytest.fixture
def small(desk_config):
    return desk_config.with_overrides({"dtd3.hidden_sizes": [8], "td3.hidden_sizes": [8]})


def metrics_record(timestep=50, **overrides):
    values = dict(
        timestep=timestep,
        episode=1,
        episode_return=-3.25,
        objective=12.5,
        compute=4.0,
        energy=0.1,
        delay=35.0,
        admission_rate=0.75,
        violating_users=1.5,
        slice_admission_rate=[1.0, 0.5, 0.75],
        slice_latency=[30.0, 40.5, 50.0],
    )
    values.update(overrides)
    return MetricsRecord(**values)


def test_csv_round_trip_keeps_lists_and_none(tmp_path):
    """Test that list fields and empty optionals survive the CSV file."""
    metrics = CsvRepository(MetricsRecord, tmp_path / "metrics.csv")
    metrics.create(metrics_record())
    assert metrics.get_all() == [metrics_record()]

    updates = CsvRepository(UpdateRecord, tmp_path / "updates.csv")
    updates.create(UpdateRecord(update=1, timestep=20, critic_loss=0.5, q_mean=-1.0))
    loaded = updates.get_all()[0]
    assert loaded.actor_q is None
    assert loaded.target_gap_max is None


def test_header_written_once(tmp_path):
    repo = CsvRepository(MetricsRecord, tmp_path / "metrics.csv")
    assert repo.count() == 0
    assert repo.create_many(metrics_record(t) for t in (50, 100)) == 2
    repo.create(metrics_record(150))
    lines = repo.path.read_text().splitlines()
    assert lines[0].startswith("timestep,episode")
    assert sum(line.startswith("timestep") for line in lines) == 1
    assert repo.count() == 3
    assert [r.timestep for r in repo.get_all()] == [50, 100, 150]


def test_empty_list_round_trip(tmp_path):
    repo = CsvRepository(EvaluationRecord, tmp_path / "evaluations.csv")
    record = EvaluationRecord(
        timestep=0, score=0.1, mean_return=0.05, admission_rate=1.0,
        latency=20.0, cpu_utilization=0.4, energy=0.2,
    )
    repo.create(record)
    assert repo.get_all()[0].returns == []


def test_prepare_truncates_previous_artifacts(tmp_path):
    run = RunRepository(tmp_path / "run")
    run.prepare()
    run.metrics.create(metrics_record())
    assert run.metrics.count() == 1
    run.prepare()
    assert run.metrics.count() == 0
    assert set(run.artifact_paths()) >= {"metrics", "evaluations", "checkpoints"}


def test_manifest_save_and_load(tmp_path):
    run = RunRepository(tmp_path / "run")
    assert run.manifest.load() is None
    manifest = RunManifest(
        config_name="desk", config_hash="abc", seed=0, agent="dtd3", mode="sync",
        code_version="0.1.0", total_timesteps=100,
    )
    run.manifest.save(manifest)
    assert run.manifest.load() == manifest


def test_checkpoint_round_trip(small, tmp_path):
    repo = CheckpointRepository(tmp_path / "ckpt")
    agent = DistributionalTd3Agent(4, 2, small.dtd3, seed=0)
    path = repo.save(agent, "t000000100", config_hash="h1")
    clone = DistributionalTd3Agent(4, 2, small.dtd3, seed=9)
    meta = repo.load(clone, path)
    assert meta["agent"] == "dtd3"
    assert meta["config_hash"] == "h1"
    for name, net in agent.networks().items():
        np.testing.assert_array_equal(net.flat(), clone.networks()[name].flat())


def test_checkpoint_rejects_wrong_agent_and_dims(small, tmp_path):
    repo = CheckpointRepository(tmp_path)
    path = repo.save(DistributionalTd3Agent(4, 2, small.dtd3, seed=0), "t1")
    with pytest.raises(CheckpointFormatError, match="dtd3"):
        repo.load(Td3Agent(4, 2, small.td3, seed=0), path)
    with pytest.raises(CheckpointFormatError, match="dimensions"):
        repo.load(DistributionalTd3Agent(5, 2, small.dtd3, seed=0), path)


def test_checkpoint_missing_and_corrupt(tmp_path):
    repo = CheckpointRepository(tmp_path)
    with pytest.raises(CheckpointNotFoundError):
        repo.read_meta(tmp_path / "absent.npz")
    with pytest.raises(CheckpointNotFoundError):
        repo.latest()
    bad = tmp_path / "bad.npz"
    bad.write_bytes(b"not a zip archive")
    with pytest.raises(CheckpointFormatError):
        repo.read_meta(bad)


def test_checkpoint_version_checked(tmp_path):
    path = tmp_path / "old.npz"
    np.savez(
        path,
        **{
            "meta/version": np.array(99),
            "meta/agent": np.array("dtd3"),
            "meta/dims": np.array([4, 2]),
            "meta/config_hash": np.array(""),
        },
    )
    with pytest.raises(CheckpointFormatError, match="version 99"):
        CheckpointRepository.read_meta(path)


def test_latest_uses_tag_order(small, tmp_path):
    repo = CheckpointRepository(tmp_path)
    agent = Td3Agent(4, 2, small.td3, seed=0)
    for tag in ("t000000200", "t000000050", "t000000100"):
        repo.save(agent, tag)
    assert repo.latest().stem == "t000000200"
    assert len(repo.list()) == 3
