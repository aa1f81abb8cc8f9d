"""Domain enums shared across modules."""

from enum import Enum


class ViolationKind(str, Enum):
    """Constraint kinds checked per served user, most severe first."""

    SINR = "sinr"
    CPU = "cpu"
    MSR = "msr"
    DELAY = "delay"


class AgentKind(str, Enum):
    """Learning agents selectable from the CLI."""

    DTD3 = "dtd3"
    TD3 = "td3"
    DDPG = "ddpg"


class RunMode(str, Enum):
    """Training orchestration modes."""

    SYNC = "sync"
    ASYNC = "async"


class Activation(str, Enum):
    """Layer nonlinearities supported by the dense network core."""

    LINEAR = "linear"
    RELU = "relu"
    GELU = "gelu"
    TANH = "tanh"


class BufferAssignment(str, Enum):
    """How actors distribute transitions across replay shards."""

    ROUND_ROBIN = "round_robin"
    RANDOM = "random"


class PriorityTransform(str, Enum):
    """Mapping from per-transition loss to replay priority."""

    ABS = "abs"
    SQRT = "sqrt"


class ExplorationNoise(str, Enum):
    """Exploration processes for deterministic policies."""

    GAUSSIAN = "gaussian"
    OU = "ou"
