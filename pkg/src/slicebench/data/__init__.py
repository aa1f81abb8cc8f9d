"""Data layer with records and repositories."""

from slicebench.data.models import (
    EvaluationRecord,
    MetricsRecord,
    RunManifest,
    TimingRecord,
    UpdateRecord,
)

__all__ = [
    "EvaluationRecord",
    "MetricsRecord",
    "RunManifest",
    "TimingRecord",
    "UpdateRecord",
]
