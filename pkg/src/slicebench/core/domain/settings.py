"""Experiment configuration schema, file loading and presets."""

import hashlib
import json
import logging
import math
import tomllib
from importlib import resources
from pathlib import Path
from typing import Any, Union

import tomli_w
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from slicebench.core.domain.enums import (
    Activation,
    BufferAssignment,
    ExplorationNoise,
    PriorityTransform,
    RunMode,
)
from slicebench.core.domain.exceptions import ConfigError

logger = logging.getLogger(__name__)

PRESET_NAMES = ("paper", "desk", "latency")


class _Section(BaseModel):
    """Frozen section rejecting unknown keys."""

    model_config = ConfigDict(extra="forbid", frozen=True)


class ChannelSettings(_Section):
    """Geometry and radio parameters of the cell-free network."""

    n_aps: int = Field(150, ge=1)
    area_side: float = Field(1000.0, gt=0)
    pathloss_exponent: float = Field(3.5, gt=0)
    reference_gain: float = Field(1e-3, gt=0)
    regularizer_noise: float = Field(1e-10, gt=0)
    receiver_noise: float = Field(1e-10, gt=0)
    snr_gap: float = Field(1.0, ge=1.0)


class ComputeSettings(_Section):
    """Computing model constants (MOPTS)."""

    theta_hat: float = Field(10.0, gt=0)
    c_b: float = Field(20.0, gt=0)
    delta: float = Field(0.5, gt=0)
    core_capacity: float = Field(100.0, gt=0)
    cores_per_vnf: int = Field(4, ge=1)
    total_cpu: float = Field(12000.0, gt=0)
    reserve_fraction: float = Field(0.1, ge=0, lt=1)
    priority_reserve_fraction: float = Field(0.05, ge=0, lt=1)
    zero_tol: float = Field(1e-12, gt=0)

    @property
    def usable_cpu(self) -> float:
        """CPU pool left after the management reserve."""
        return self.total_cpu * (1.0 - self.reserve_fraction)


class EnergySettings(_Section):
    """Processor and radio power constants."""

    iota: float = Field(1e-26, gt=0)
    p_z: float = Field(1e9, gt=0)
    psi: float = Field(5.0, ge=0)
    fronthaul_power: float = Field(0.0, ge=0)
    circuit_power: float = Field(0.0, ge=0)
    cores_per_processor: int = Field(4, ge=1)


class DelaySettings(_Section):
    """Queueing model constants shared by all slices."""

    vnf_boot_delay: float = Field(20.0, ge=0)
    service_coupling: float = Field(0.02, gt=0)
    packets_per_rate: float = Field(0.5, gt=0)
    unstable_delay: float = Field(140.0, gt=0)


class PenaltySettings(_Section):
    """Per-violation penalty coefficients."""

    rho_sinr: float = 0.5
    rho_cpu: float = 0.3
    rho_msr: float = 0.1
    rho_delay: float = 0.05
    rho_reject: float = Field(0.01, ge=0)

    @model_validator(mode="after")
    def _check_ordering(self) -> "PenaltySettings":
        if not (self.rho_sinr > self.rho_cpu > self.rho_msr > self.rho_delay > 0):
            raise ValueError("penalties must satisfy rho_sinr > rho_cpu > rho_msr > rho_delay > 0")
        return self


class WeightSettings(_Section):
    """Objective weights w1..w3 and reward scale w4."""

    w1: float = Field(1.0, gt=0)
    w2: float = Field(2.0, gt=0)
    w3: float = Field(1.0, gt=0)
    w4: float = Field(100.0, gt=0)


class SliceProfile(_Section):
    """QoS targets and traffic of one slice."""

    name: str
    sinr_threshold: float = Field(gt=0)
    cpu_threshold: float = Field(gt=0)
    delay_budget: float = Field(gt=0)
    arrival_rate: float = Field(ge=0)
    max_users: int = Field(ge=1)
    packet_rate: float = Field(gt=0)
    tx_rate: float = Field(gt=0)


def _default_slices() -> list[SliceProfile]:
    return [
        SliceProfile(
            name="A", sinr_threshold=10.0, cpu_threshold=190.0, delay_budget=30.0,
            arrival_rate=0.6, max_users=10, packet_rate=0.5, tx_rate=2.0,
        ),
        SliceProfile(
            name="B", sinr_threshold=5.0, cpu_threshold=200.0, delay_budget=65.0,
            arrival_rate=1.5, max_users=20, packet_rate=1.0, tx_rate=2.5,
        ),
        SliceProfile(
            name="C", sinr_threshold=5.0, cpu_threshold=200.0, delay_budget=70.0,
            arrival_rate=1.5, max_users=20, packet_rate=1.0, tx_rate=2.5,
        ),
    ]


class EnvSettings(_Section):
    """MDP settings of the slicing environment."""

    env_id: str = "smartech-v1"
    episode_length: int = Field(50, ge=1)
    max_power: float = Field(1.0, gt=0)
    cpu_step_fraction: float = Field(0.1, gt=0, le=1)
    initial_allocation_fraction: float = Field(0.5, ge=0, le=1)
    mean_holding_time: float = Field(10.0, ge=1)
    min_vnfs_per_slice: int = Field(1, ge=1)
    subscriber_cap: int = Field(50, ge=1)
    slices: list[SliceProfile] = Field(default_factory=_default_slices, min_length=1)

    @model_validator(mode="after")
    def _check_caps(self) -> "EnvSettings":
        total = sum(s.max_users for s in self.slices)
        if total > self.subscriber_cap:
            raise ValueError(
                f"sum of slice max_users ({total}) exceeds subscriber_cap ({self.subscriber_cap})"
            )
        return self

    @property
    def n_slices(self) -> int:
        return len(self.slices)

    @property
    def n_subscribers(self) -> int:
        return sum(s.max_users for s in self.slices)


class _AgentSettings(_Section):
    hidden_sizes: list[int] = Field(min_length=0)
    activation: Activation
    gamma: float = Field(0.99, gt=0, le=1)
    tau: float = Field(gt=0, le=1)
    batch_size: int = Field(ge=1)
    actor_lr: float = Field(gt=0)
    critic_lr: float = Field(gt=0)
    reward_scale: float = Field(gt=0)
    exploration_noise: float = Field(ge=0)
    start_timesteps: int = Field(10_000, ge=0)


class DTd3Settings(_AgentSettings):
    """Prioritized twin delayed distributional DDPG hyperparameters."""

    hidden_sizes: list[int] = Field(default_factory=lambda: [128] * 5)
    activation: Activation = Activation.GELU
    tau: float = Field(0.001, gt=0, le=1)
    batch_size: int = Field(128, ge=1)
    actor_lr: float = Field(0.001, gt=0)
    critic_lr: float = Field(0.001, gt=0)
    reward_scale: float = Field(0.2, gt=0)
    exploration_noise: float = Field(0.1, ge=0)
    policy_noise: float = Field(0.2, ge=0)
    noise_clip: float = Field(0.5, ge=0)
    clip_boundary: float = Field(18.0, gt=0)
    policy_freq: int = Field(2, ge=1)
    target_samples: int = Field(1, ge=1)
    log_std_min: float = math.log(1e-3)
    log_std_max: float = math.log(1e3)

    @model_validator(mode="after")
    def _check_log_std(self) -> "DTd3Settings":
        if self.log_std_min >= self.log_std_max:
            raise ValueError("log_std_min must be below log_std_max")
        return self


class Td3Settings(_AgentSettings):
    """Twin delayed DDPG baseline hyperparameters."""

    hidden_sizes: list[int] = Field(default_factory=lambda: [400, 300])
    activation: Activation = Activation.RELU
    tau: float = Field(0.005, gt=0, le=1)
    batch_size: int = Field(100, ge=1)
    actor_lr: float = Field(0.001, gt=0)
    critic_lr: float = Field(0.001, gt=0)
    reward_scale: float = Field(1.0, gt=0)
    exploration_noise: float = Field(0.1, ge=0)
    policy_noise: float = Field(0.2, ge=0)
    noise_clip: float = Field(0.5, ge=0)
    policy_freq: int = Field(2, ge=1)


class DdpgSettings(_AgentSettings):
    """DDPG baseline hyperparameters."""

    hidden_sizes: list[int] = Field(default_factory=lambda: [200, 200])
    activation: Activation = Activation.RELU
    tau: float = Field(0.001, gt=0, le=1)
    batch_size: int = Field(64, ge=1)
    actor_lr: float = Field(0.0001, gt=0)
    critic_lr: float = Field(0.001, gt=0)
    reward_scale: float = Field(1.0, gt=0)
    exploration_noise: float = Field(0.2, ge=0)
    noise: ExplorationNoise = ExplorationNoise.GAUSSIAN
    ou_theta: float = Field(0.15, ge=0)


class ReplaySettings(_Section):
    """Experience replay parameters."""

    capacity: int = Field(1_000_000, ge=1)
    alpha: float = Field(0.6, ge=0)
    beta_start: float = Field(0.4, ge=0, le=1)
    beta_end: float = Field(1.0, ge=0, le=1)
    priority_floor: float = Field(1e-6, gt=0)
    priority_transform: PriorityTransform = PriorityTransform.ABS


class RuntimeSettings(_Section):
    """Training orchestration parameters."""

    total_timesteps: int = Field(2_000_000, ge=0)
    eval_interval: int = Field(20_000, ge=1)
    eval_episodes: int = Field(5, ge=1)
    eval_top_k: int = Field(3, ge=1)
    seed: int = Field(0, ge=0)
    mode: RunMode = RunMode.SYNC
    n_actors: int = Field(3, ge=1)
    n_buffers: int = Field(2, ge=1)
    n_learners: int = Field(3, ge=1)
    snapshot_refresh: int = Field(50, ge=1)
    buffer_assignment: BufferAssignment = BufferAssignment.ROUND_ROBIN
    lockstep: bool = False
    checkpoint_at_eval: bool = True

    @model_validator(mode="after")
    def _check_runtime(self) -> "RuntimeSettings":
        if self.total_timesteps > 0 and self.eval_interval > self.total_timesteps:
            raise ValueError("eval_interval must not exceed total_timesteps")
        if self.eval_top_k > self.eval_episodes:
            raise ValueError("eval_top_k must not exceed eval_episodes")
        if self.lockstep and (self.n_actors, self.n_buffers, self.n_learners) != (1, 1, 1):
            raise ValueError("lockstep handoff requires exactly one actor, buffer and learner")
        return self


class ExperimentConfig(_Section):
    """Complete experiment configuration."""

    name: str = "paper"
    channel: ChannelSettings = Field(default_factory=ChannelSettings)
    compute: ComputeSettings = Field(default_factory=ComputeSettings)
    energy: EnergySettings = Field(default_factory=EnergySettings)
    delay: DelaySettings = Field(default_factory=DelaySettings)
    penalties: PenaltySettings = Field(default_factory=PenaltySettings)
    weights: WeightSettings = Field(default_factory=WeightSettings)
    env: EnvSettings = Field(default_factory=EnvSettings)
    dtd3: DTd3Settings = Field(default_factory=DTd3Settings)
    td3: Td3Settings = Field(default_factory=Td3Settings)
    ddpg: DdpgSettings = Field(default_factory=DdpgSettings)
    replay: ReplaySettings = Field(default_factory=ReplaySettings)
    runtime: RuntimeSettings = Field(default_factory=RuntimeSettings)

    def with_overrides(self, overrides: dict[str, Any]) -> "ExperimentConfig":
        """Return a re-validated copy with dotted-path overrides applied.

        Args:
            overrides: Mapping like {"runtime.seed": 7, "dtd3.batch_size": 8}

        Returns:
            New configuration

        Raises:
            ConfigError: If a path is unknown or the result fails validation
        """
        data = self.model_dump(mode="json")
        for dotted, value in overrides.items():
            node = data
            *parents, leaf = dotted.split(".")
            for part in parents:
                if not isinstance(node, dict) or part not in node:
                    raise ConfigError(f"unknown config key: {dotted}")
                node = node[part]
            if not isinstance(node, dict) or leaf not in node:
                raise ConfigError(f"unknown config key: {dotted}")
            node[leaf] = value.value if hasattr(value, "value") else value
        return parse_config(data)

    def config_hash(self) -> str:
        """Stable SHA-256 of the canonical JSON form."""
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()


def _missing_keys(model_cls: type[BaseModel], data: Any, prefix: str = "") -> list[str]:
    """List dotted paths of schema fields absent from raw file data."""
    if not isinstance(data, dict):
        return []
    missing = []
    for name, field in model_cls.model_fields.items():
        path = f"{prefix}{name}"
        if name not in data:
            missing.append(path)
            continue
        annotation = field.annotation
        if isinstance(annotation, type) and issubclass(annotation, BaseModel):
            missing.extend(_missing_keys(annotation, data[name], f"{path}."))
        elif getattr(annotation, "__origin__", None) is list:
            (item_cls,) = annotation.__args__
            if isinstance(item_cls, type) and issubclass(item_cls, BaseModel):
                for i, item in enumerate(data[name]):
                    missing.extend(_missing_keys(item_cls, item, f"{path}[{i}]."))
    return missing


def _format_validation_error(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        loc = ".".join(str(p) for p in item["loc"])
        parts.append(f"{loc}: {item['msg']}")
    return "; ".join(parts)


def parse_config(data: dict[str, Any], require_all: bool = False) -> ExperimentConfig:
    """Validate raw nested data into an ExperimentConfig.

    Args:
        data: Nested mapping as read from a TOML file
        require_all: Reject data that omits any schema key

    Returns:
        Validated configuration

    Raises:
        ConfigError: Naming the offending key(s)
    """
    if require_all:
        missing = _missing_keys(ExperimentConfig, data)
        if missing:
            raise ConfigError(f"missing config key(s): {', '.join(missing)}")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid config: {_format_validation_error(e)}") from e


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """Load and validate a complete configuration file.

    Args:
        path: TOML file path

    Returns:
        Validated configuration

    Raises:
        ConfigError: If the file is unreadable, malformed or incomplete
    """
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"malformed config file {path}: {e}") from e

    config = parse_config(data, require_all=True)
    logger.debug(f"Loaded config {config.name} from {path}")
    return config


def load_preset(name: str) -> ExperimentConfig:
    """Load one of the shipped presets.

    Args:
        name: paper, desk or latency

    Returns:
        Validated configuration
    """
    if name not in PRESET_NAMES:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
    text = resources.files("slicebench.presets").joinpath(f"{name}.toml").read_text()
    return parse_config(tomllib.loads(text), require_all=True)


def dumps_config(config: ExperimentConfig) -> str:
    """Serialize a configuration to TOML text."""
    return tomli_w.dumps(config.model_dump(mode="json"))


def save_config(config: ExperimentConfig, path: Union[str, Path]) -> Path:
    """Write a configuration to a TOML file.

    Args:
        config: Configuration to write
        path: Destination

    Returns:
        The written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_config(config))
    return path
