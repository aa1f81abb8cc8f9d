"""Agent checkpoints as versioned .npz archives."""

import logging
from pathlib import Path
from typing import List, Union

import numpy as np

from slicebench.core.domain.exceptions import CheckpointFormatError, CheckpointNotFoundError

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


class CheckpointRepository:
    """Save and restore agents under a checkpoint directory."""

    def __init__(self, directory: Union[str, Path]):
        self.directory = Path(directory)

    def save(self, agent, tag: str, config_hash: str = "") -> Path:
        """Write an agent checkpoint.

        Args:
            agent: ActorCriticAgent
            tag: File stem, e.g. "t000020000"
            config_hash: Hash of the producing configuration

        Returns:
            Path of the archive
        """
        self.directory.mkdir(parents=True, exist_ok=True)
        path = self.directory / f"{tag}.npz"
        meta = {
            "meta/version": np.array(CHECKPOINT_VERSION),
            "meta/agent": np.array(agent.name),
            "meta/dims": np.array([agent.obs_dim, agent.action_dim]),
            "meta/config_hash": np.array(config_hash),
        }
        with path.open("wb") as fh:
            np.savez(fh, **meta, **agent.checkpoint_state())
        logger.info(f"Saved {agent.name} checkpoint to {path}")
        return path

    @staticmethod
    def read_meta(path: Union[str, Path]) -> dict:
        """Version, agent name, dimensions and config hash of a checkpoint.

        Raises:
            CheckpointNotFoundError: If the file is missing
            CheckpointFormatError: If it is not a readable checkpoint of this version
        """
        path = Path(path)
        if not path.is_file():
            raise CheckpointNotFoundError(f"checkpoint not found: {path}")
        try:
            with np.load(path) as data:
                version = int(data["meta/version"])
                meta = {
                    "version": version,
                    "agent": str(data["meta/agent"]),
                    "obs_dim": int(data["meta/dims"][0]),
                    "action_dim": int(data["meta/dims"][1]),
                    "config_hash": str(data["meta/config_hash"]),
                }
        except (OSError, ValueError, KeyError) as e:
            raise CheckpointFormatError(f"unreadable checkpoint {path}: {e}") from e
        if version != CHECKPOINT_VERSION:
            raise CheckpointFormatError(
                f"checkpoint version {version} unsupported (expected {CHECKPOINT_VERSION})"
            )
        return meta

    def load(self, agent, path: Union[str, Path]) -> dict:
        """Restore an agent in place.

        Returns:
            Checkpoint metadata
        """
        meta = self.read_meta(path)
        if meta["agent"] != agent.name:
            raise CheckpointFormatError(f"checkpoint holds a {meta['agent']} agent, not {agent.name}")
        if (meta["obs_dim"], meta["action_dim"]) != (agent.obs_dim, agent.action_dim):
            raise CheckpointFormatError("checkpoint dimensions do not match the environment")
        with np.load(path) as data:
            state = {k: data[k] for k in data.files if not k.startswith("meta/")}
        try:
            agent.load_checkpoint_state(state)
        except KeyError as e:
            raise CheckpointFormatError(f"checkpoint is missing entry {e}") from e
        logger.info(f"Loaded {agent.name} checkpoint from {path}")
        return meta

    def list(self) -> List[Path]:
        if not self.directory.exists():
            return []
        return sorted(self.directory.glob("*.npz"))

    def latest(self) -> Path:
        """Most recent checkpoint by tag order.

        Raises:
            CheckpointNotFoundError: If the directory holds none
        """
        checkpoints = self.list()
        if not checkpoints:
            raise CheckpointNotFoundError(f"no checkpoints in {self.directory}")
        return checkpoints[-1]
