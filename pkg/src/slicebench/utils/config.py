"""Process-level configuration for SliceBench."""

import os
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv


class Config:
    """Base configuration."""

    # Load .env file
    env_file = Path(__file__).parent.parent.parent.parent / ".env"
    if env_file.exists():
        load_dotenv(env_file)

    DEBUG = False
    TESTING = False

    # Logging
    LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
    LOG_FILE = os.getenv("LOG_FILE", "")

    # Output
    OUT_DIR = os.getenv("SLICEBENCH_OUT", "runs")
    METRICS_FILE = "metrics.csv"
    EVALUATIONS_FILE = "evaluations.csv"
    TIMING_FILE = "timing.csv"
    UPDATES_FILE = "updates.csv"
    MANIFEST_FILE = "manifest.json"
    CHECKPOINT_DIR = "checkpoints"

    # Seeding
    TIME_SEED = os.getenv("SLICEBENCH_TIME_SEED", "0") == "1"

    # Presets
    DEFAULT_PRESET = os.getenv("SLICEBENCH_PRESET", "desk")


class DevelopmentConfig(Config):
    """Development configuration."""

    DEBUG = True
    LOG_LEVEL = "DEBUG"


class TestingConfig(Config):
    """Testing configuration."""

    TESTING = True
    LOG_LEVEL = "DEBUG"
    LOG_FILE = ""


class ProductionConfig(Config):
    """Production configuration."""

    DEBUG = False
    LOG_LEVEL = "INFO"


def get_config(env: Optional[str] = None) -> Config:
    """Get configuration based on environment.

    Args:
        env: Environment name (development, testing, production)

    Returns:
        Configuration object
    """
    if env is None:
        env = os.getenv("SLICEBENCH_ENV", "production")

    config_map = {
        "development": DevelopmentConfig,
        "testing": TestingConfig,
        "production": ProductionConfig,
    }

    return config_map.get(env, ProductionConfig)()
