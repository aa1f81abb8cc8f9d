"""Repositories for run artifacts."""

from slicebench.data.repositories.base import CsvRepository, JsonRepository
from slicebench.data.repositories.checkpoint_repository import CheckpointRepository
from slicebench.data.repositories.metrics_repository import RunRepository

__all__ = ["CsvRepository", "JsonRepository", "CheckpointRepository", "RunRepository"]
