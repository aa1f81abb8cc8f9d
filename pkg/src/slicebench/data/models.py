"""Persisted record types for training runs."""

from datetime import datetime
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

LIST_SEPARATOR = ";"


class Record(BaseModel):
    """Flat record; list fields travel as separator-joined text in CSV files."""

    model_config = ConfigDict(extra="forbid")

    @field_validator("*", mode="before")
    @classmethod
    def _split_lists(cls, value, info):
        annotation = cls.model_fields[info.field_name].annotation
        if isinstance(value, str) and getattr(annotation, "__origin__", None) is list:
            return [float(v) for v in value.split(LIST_SEPARATOR)] if value else []
        if isinstance(value, str) and value == "" and annotation == Optional[float]:
            return None
        return value


class MetricsRecord(Record):
    """One training episode."""

    timestep: int
    episode: int
    actor: int = 0
    episode_return: float
    objective: float
    compute: float
    energy: float
    delay: float
    admission_rate: float
    violating_users: float
    slice_admission_rate: list[float] = Field(default_factory=list)
    slice_latency: list[float] = Field(default_factory=list)
    slice_cpu_utilization: list[float] = Field(default_factory=list)
    slice_energy: list[float] = Field(default_factory=list)


class EvaluationRecord(Record):
    """One evaluation point: best-k mean of noiseless episode returns."""

    timestep: int
    score: float
    mean_return: float
    returns: list[float] = Field(default_factory=list)
    admission_rate: float
    latency: float
    cpu_utilization: float
    energy: float
    slice_admission_rate: list[float] = Field(default_factory=list)
    slice_latency: list[float] = Field(default_factory=list)
    slice_cpu_utilization: list[float] = Field(default_factory=list)
    slice_energy: list[float] = Field(default_factory=list)


class TimingRecord(Record):
    """Wall-clock cost of training, kept apart from the deterministic files."""

    timestep: int
    episode: int
    episode_ms: float
    ms_per_1000_steps: float


class UpdateRecord(Record):
    """One applied learner update."""

    update: int
    timestep: int
    learner: int = 0
    critic_loss: float
    q_mean: float
    target_gap_max: Optional[float] = None
    actor_q: Optional[float] = None


class RunManifest(BaseModel):
    """Identity of a run and where its artifacts live."""

    config_name: str
    config_hash: str
    seed: int
    agent: str
    mode: str
    code_version: str
    total_timesteps: int
    started_at: datetime = Field(default_factory=datetime.utcnow)
    finished_at: Optional[datetime] = None
    final_score: Optional[float] = None
    artifacts: dict[str, str] = Field(default_factory=dict)
