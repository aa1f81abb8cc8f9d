"""Domain enums, settings and exceptions."""

from slicebench.core.domain.enums import (
    ViolationKind,
    AgentKind,
    RunMode,
    Activation,
    BufferAssignment,
    PriorityTransform,
    ExplorationNoise,
)

__all__ = [
    "ViolationKind",
    "AgentKind",
    "RunMode",
    "Activation",
    "BufferAssignment",
    "PriorityTransform",
    "ExplorationNoise",
]
