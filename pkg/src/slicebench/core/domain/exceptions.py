"""Custom exceptions for the SliceBench system."""


class SliceBenchError(Exception):
    """Base exception for SliceBench."""

    pass


class ConfigError(SliceBenchError):
    """Raised when an experiment configuration is missing keys or fails validation."""

    pass


class InvalidTopologyError(SliceBenchError):
    """Raised when AP/user geometry violates its invariants."""

    pass


class DegenerateChannelError(SliceBenchError):
    """Raised when a beamforming direction cannot be normalized."""

    pass


class UnstableQueueError(SliceBenchError):
    """Raised when an M/M/1 queue has service rate not above its arrival rate."""

    def __init__(self, message: str, users: tuple[int, ...] = ()):
        super().__init__(message)
        self.users = users


class DegenerateObjectiveError(SliceBenchError):
    """Raised when the network objective is too small to invert."""

    pass


class ShapeMismatchError(SliceBenchError):
    """Raised when array shapes disagree with a network's layer widths."""

    pass


class InsufficientDataError(SliceBenchError):
    """Raised when a replay buffer holds fewer transitions than requested."""

    pass


class InvariantViolationError(SliceBenchError):
    """Raised when a training-time invariant guard trips."""

    pass


class CheckpointNotFoundError(SliceBenchError):
    """Raised when a checkpoint path does not exist."""

    pass


class CheckpointFormatError(SliceBenchError):
    """Raised when a checkpoint has a bad magic number or unsupported version."""

    pass
