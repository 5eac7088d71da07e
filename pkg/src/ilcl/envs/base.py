"""Environment abstraction shared by built-in worlds and the bridge client."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from ..errors import EnvError, UnsupportedCapability


@dataclass(frozen=True)
class Observation:
    text: str
    terminal: bool = False
    score_delta: int = 0


@dataclass(frozen=True)
class EnvCapabilities:
    snapshot_restore: bool = False
    deterministic: bool = True
    action_inventory: tuple[str, ...] | None = None


@dataclass(frozen=True)
class TaskSpec:
    id: str
    goal: str
    success: Callable[[object], bool] = field(compare=False)
    optimal_steps: int = 0


@dataclass
class GroundTruth:
    locations: set[str] = field(default_factory=set)
    objects: set[tuple[str, str]] = field(default_factory=set)
    edges: set[tuple[str, str, str, str]] = field(default_factory=set)
    rules: list[tuple[str, str, str]] = field(default_factory=list)
    tasks: list[TaskSpec] = field(default_factory=list)


class Environment:
    """Interface every environment implements.

    Built-ins are deterministic: the same seed, params, and action
    sequence always yield the same observation sequence.
    """

    name = "environment"
    schema_id = "roomworld"
    background = ""

    def reset(self) -> Observation:
        raise NotImplementedError

    def step(self, action: str) -> Observation:
        raise NotImplementedError

    def capabilities(self) -> EnvCapabilities:
        return EnvCapabilities()

    def snapshot(self) -> str:
        raise UnsupportedCapability(f"{self.name} does not support snapshots")

    def restore(self, snapshot_id: str) -> None:
        raise UnsupportedCapability(f"{self.name} does not support snapshots")

    def fingerprint(self) -> str:
        raise NotImplementedError

    def close(self) -> None:
        pass


class CountingEnv(Environment):
    """Wrapper that counts env.step calls; reset and restore stay free."""

    def __init__(self, inner: Environment):
        self.inner = inner
        self.steps_used = 0
        self.name = inner.name
        self.schema_id = inner.schema_id
        self.background = inner.background

    def reset(self) -> Observation:
        return self.inner.reset()

    def step(self, action: str) -> Observation:
        self.steps_used += 1
        return self.inner.step(action)

    def capabilities(self) -> EnvCapabilities:
        return self.inner.capabilities()

    def snapshot(self) -> str:
        return self.inner.snapshot()

    def restore(self, snapshot_id: str) -> None:
        self.inner.restore(snapshot_id)

    def fingerprint(self) -> str:
        return self.inner.fingerprint()

    def close(self) -> None:
        self.inner.close()


def require_not_terminal(terminal: bool) -> None:
    if terminal:
        raise EnvError("episode is over; call reset() before stepping again")
