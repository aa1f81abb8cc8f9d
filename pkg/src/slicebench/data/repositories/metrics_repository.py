"""Per-run artifact repository: metrics, evaluations, timing, updates and manifest."""

import logging
from pathlib import Path
from typing import Union

from slicebench.data.models import (
    EvaluationRecord,
    MetricsRecord,
    RunManifest,
    TimingRecord,
    UpdateRecord,
)
from slicebench.data.repositories.base import CsvRepository, JsonRepository
from slicebench.utils.config import Config

logger = logging.getLogger(__name__)


class RunRepository:
    """All flat-file artifacts of one run directory."""

    def __init__(self, run_dir: Union[str, Path], config: Config = None):
        """Initialize run repository.

        Args:
            run_dir: Directory holding the run's files
            config: Process configuration (file names)
        """
        self.config = config or Config()
        self.run_dir = Path(run_dir)
        self.metrics = CsvRepository(MetricsRecord, self.run_dir / self.config.METRICS_FILE)
        self.evaluations = CsvRepository(
            EvaluationRecord, self.run_dir / self.config.EVALUATIONS_FILE
        )
        self.timing = CsvRepository(TimingRecord, self.run_dir / self.config.TIMING_FILE)
        self.updates = CsvRepository(UpdateRecord, self.run_dir / self.config.UPDATES_FILE)
        self.manifest = JsonRepository(RunManifest, self.run_dir / self.config.MANIFEST_FILE)

    @property
    def checkpoint_dir(self) -> Path:
        return self.run_dir / self.config.CHECKPOINT_DIR

    def prepare(self) -> None:
        """Create the run directory and truncate any previous artifacts."""
        self.run_dir.mkdir(parents=True, exist_ok=True)
        for repo in (self.metrics, self.evaluations, self.timing, self.updates):
            if repo.path.exists():
                logger.info(f"Overwriting {repo.path}")
                repo.path.unlink()

    def artifact_paths(self) -> dict[str, str]:
        return {
            "metrics": str(self.metrics.path),
            "evaluations": str(self.evaluations.path),
            "timing": str(self.timing.path),
            "updates": str(self.updates.path),
            "checkpoints": str(self.checkpoint_dir),
        }
