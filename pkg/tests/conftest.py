"""Pytest configuration and fixtures."""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from slicebench.core.domain.settings import ExperimentConfig, load_preset
from slicebench.utils.config import TestingConfig

SMALL_NET = [16, 16]


def tiny_overrides(total: int = 200, seed: int = 0) -> dict:
    """Small networks and budgets so runs finish in seconds."""
    overrides = {
        "runtime.total_timesteps": total,
        "runtime.eval_interval": 100,
        "runtime.eval_episodes": 2,
        "runtime.eval_top_k": 1,
        "runtime.seed": seed,
        "replay.capacity": 2000,
    }
    for agent in ("dtd3", "td3", "ddpg"):
        overrides[f"{agent}.hidden_sizes"] = SMALL_NET
        overrides[f"{agent}.batch_size"] = 8
        overrides[f"{agent}.start_timesteps"] = 20
    return overrides


@pytest.fixture
def config():
    """Return testing configuration."""
    return TestingConfig()


@pytest.fixture(scope="session")
def desk_config() -> ExperimentConfig:
    """Shipped desk preset."""
    return load_preset("desk")


@pytest.fixture
def tiny_config(desk_config) -> ExperimentConfig:
    """Desk scenario with a 200-step budget and small networks."""
    return desk_config.with_overrides(tiny_overrides())


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def run_dir(tmp_path) -> Path:
    return tmp_path / "run"
