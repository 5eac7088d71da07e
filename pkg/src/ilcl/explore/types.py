"""Shared types for the exploration loop."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..envs.base import Observation
from ..forest import TodoPath

# Definition text bound as {{ todo_def }} in planner prompts.
TODO_DEF = """\
The TODO forest is a collection of shallow TODO trees. Each tree is rooted
at a named state with a succinct summary of that state. Every other node is
one action, paired with its key result once tried:

- state_name: summary of the state
  - action: key result of taking the action from the state
    - action: key result of taking this action after the one above
  - action: TODO

`TODO` marks an action that has not been tried yet. A key result starting
with `action failed` records an unsuccessful attempt. `[reach state_name]`
after a key result means that node was turned into the named state. A path
is written `state_name -> action -> ... -> action` and always starts at a
state that exists in the forest. `init_state` is the state right after the
environment starts."""


@dataclass(frozen=True)
class Budget:
    max_env_steps: int = 200
    max_iterations: int = 20
    max_path_length: int = 6
    num_todo: int = 3
    subagent_step_budget: int = 30
    parse_retry_limit: int = 3


@dataclass
class StepRecord:
    action: str
    observation: Observation
    thought: str | None = None
    key_result: str = ""


@dataclass
class Trajectory:
    id: str
    mode: str  # "action" | "agent"
    origin_path: TodoPath
    start_summary: str
    replayed_prefix_len: int = 0  # env steps spent replaying to the anchor
    prior_labels: list[str] = field(default_factory=list)  # resolved before records
    records: list[StepRecord] = field(default_factory=list)
    truncated: bool = False


@dataclass(frozen=True)
class Promotion:
    target_gap: str
    selected_path: TodoPath
    new_state_name: str
    state_summary: str


@dataclass
class Edit:
    id: str
    section: str  # "observations" | "action_rules"
    body: str
    status: str = "proposed"  # "proposed" | "accepted" | "revised" | "rejected"
    evidence: str = ""  # trajectory id
    resolution: str = ""  # revised body when status == "revised"

    @property
    def effective_body(self) -> str:
        return self.resolution if self.status == "revised" else self.body


@dataclass
class IterationMetrics:
    iteration: int
    env_steps_cum: int
    unknown_count: int
    loc_coverage: float | None = None
    obj_coverage: float | None = None


@dataclass
class ExplorationResult:
    document: object
    forest: object
    steps_used: int
    iterations: int
    metrics: list[IterationMetrics]
    stop_reason: str  # "gaps-resolved" | "budget-exhausted" | "planner-stop"
    trajectories: list[Trajectory] = field(default_factory=list)


def render_trajectory(traj: Trajectory, limit: int | None = 40) -> str:
    """Prompt-ready text form of a trajectory.

    A [State] line anchors where execution began; replayed actions appear
    without observations since their results are already known.
    """
    lines = [f"[State] {traj.origin_path.start_state}: {traj.start_summary}"]
    for label in traj.prior_labels:
        lines.append(f"[Replayed Action] {label}")
    records = traj.records
    if limit is not None and len(records) > limit:
        lines.append(f"({len(records) - limit} earlier actions omitted)")
        records = records[-limit:]
    for record in records:
        if record.thought:
            lines.append(f"[Thought] {record.thought}")
        lines.append(f"[Action] {record.action}")
        lines.append(f"[Observation] {record.observation.text}")
    return "\n".join(lines)


def render_history(records: list[StepRecord], limit: int = 10) -> str:
    """Recent action/observation pairs for the sub-agent prompt."""
    recent = records[-limit:]
    if not recent:
        return "(no actions taken yet)"
    lines = []
    for record in recent:
        lines.append(f"[Action] {record.action}")
        lines.append(f"[Observation] {record.observation.text}")
    return "\n".join(lines)
