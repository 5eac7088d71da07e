from .base import (
    CountingEnv,
    EnvCapabilities,
    Environment,
    GroundTruth,
    Observation,
    TaskSpec,
)

__all__ = [
    "CountingEnv",
    "EnvCapabilities",
    "Environment",
    "GroundTruth",
    "Observation",
    "TaskSpec",
]
