"""Training and experiment services."""

from slicebench.core.services.async_runtime import SharedMemory, run_async
from slicebench.core.services.experiment_service import ExperimentService
from slicebench.core.services.slicing_env import SlicingEnv
from slicebench.core.services.trainer import RunResult, evaluate, run_sync

__all__ = [
    "ExperimentService",
    "RunResult",
    "SharedMemory",
    "SlicingEnv",
    "evaluate",
    "run_async",
    "run_sync",
]
