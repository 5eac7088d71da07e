"""The Actor: reach a path's explored frontier, then execute its new steps.

Reaching the frontier uses a stored checkpoint when the environment can
restore one (free), otherwise it replays the recorded action prefix from
reset, verifying each observation against the recording. Replayed steps
are charged against the environment step budget; restores are not.
"""

from __future__ import annotations

import logging
import re

from ..envs.base import CountingEnv, Observation
from ..errors import ReplayDivergence
from ..forest import (
    Forest,
    Node,
    StateNode,
    TodoPath,
    ensure_path,
    explored_prefix,
    record_outcome,
)
from ..llm.providers import Provider, invoke
from .types import Budget, StepRecord, Trajectory, render_history

log = logging.getLogger(__name__)

KEY_RESULT_CHARS = 200
SUBAGENT_STOP = "stop"

# Observation openings that mean the action did not do what it says.
FAILURE_PATTERNS = (
    "Nothing happens",
    "You can't",
    "That's not a verb",
    "That's already",
    "You have to open",
    "You already have",
    "You need to",
    "You shouldn't",
    "has already been",
    "requires a knife",
    "The recipe is ruined",
    "*** You lost ***",
    "Invalid action.",
    "the way is blocked",
    "You are already there",
    "outside the world",
    "You don't have the materials",
)

_BANNER = re.compile(r"-= (.+?) =-")


def is_failure(text: str) -> bool:
    return any(pattern in text for pattern in FAILURE_PATTERNS)


def _first_sentence(flat: str) -> str:
    m = re.match(r"(.+?[.!?])(\s|$)", flat)
    return m.group(1) if m else flat


def rule_key_result(action: str, obs: Observation) -> str:
    """Deterministic key result for action mode; no LLM call involved."""
    flat = " ".join(obs.text.split())
    if is_failure(obs.text):
        summary = f"action failed: {_first_sentence(flat)}"
    else:
        banner = _BANNER.search(obs.text)
        if banner:
            room = banner.group(1)
            after = flat.split("=-", 1)[1].strip() if "=-" in flat else ""
            summary = f"Agent's location: {room}. {after}".strip()
        else:
            summary = _first_sentence(flat)
        if obs.score_delta:
            summary += f" Score went up by {obs.score_delta}."
        if obs.terminal:
            summary += " The episode ended."
    if len(summary) > KEY_RESULT_CHARS:
        summary = summary[: KEY_RESULT_CHARS - 3].rstrip() + "..."
    return summary


def chain_to_anchor(forest: Forest, start_state: str, resolved_labels) -> list[tuple[str, Node]]:
    """(action, node) pairs that lead from env reset to the path anchor."""

    def to_state(name: str) -> list[tuple[str, Node]]:
        state = forest.state(name)
        if state.origin is None:
            return []
        source, trail = state.origin
        chain = to_state(source)
        cursor: StateNode | Node = forest.state(source)
        for label in trail:
            node = cursor.child(label)
            chain.append((label, node))
            cursor = node
        return chain

    chain = to_state(start_state)
    cursor: StateNode | Node = forest.state(start_state)
    for label in resolved_labels:
        node = cursor.child(label)
        chain.append((label, node))
        cursor = node
    return chain


class PathExecutor:
    """Executes TODO paths against one environment, tracking recordings."""

    def __init__(
        self,
        env: CountingEnv,
        forest: Forest,
        budget: Budget,
        llm: Provider | None = None,
        mode: str = "action",
        background: str = "",
        use_checkpoints: bool = True,
        key_result_fn=None,
    ):
        self.env = env
        self.forest = forest
        self.budget = budget
        self.llm = llm
        self.mode = mode
        self.background = background
        self.snapshots = use_checkpoints and env.capabilities().snapshot_restore
        self.key_result_fn = key_result_fn or rule_key_result
        self.recorded: dict[int, str] = {}  # id(node) -> observation text
        self._counter = 0

    # -- positioning ----------------------------------------------------

    def _budget_left(self) -> int:
        return self.budget.max_env_steps - self.env.steps_used

    def mark_initial_state(self) -> None:
        """Checkpoint the freshly reset environment as init_state."""
        if self.snapshots:
            self.forest.states["init_state"].checkpoint = self.env.snapshot()

    def _reach_anchor(self, path: TodoPath) -> tuple[int, list[str], bool]:
        """Position the env at the path's deepest resolved node.

        Returns (replayed step count, labels resolved before the new
        steps, True when positioning completed).
        """
        anchor, remaining = explored_prefix(self.forest, path)
        resolved = list(path.steps)[: len(path.steps) - len(remaining)]
        if self.snapshots and anchor.checkpoint is not None:
            self.env.restore(anchor.checkpoint)
            return 0, resolved, True

        chain = chain_to_anchor(self.forest, path.start_state, resolved)
        self.env.reset()
        for index, (action, node) in enumerate(chain):
            if self._budget_left() <= 0:
                return index, resolved, False
            obs = self.env.step(action)
            expected = self.recorded.get(id(node))
            if expected is not None and obs.text != expected:
                raise ReplayDivergence(index, expected, obs.text)
            self.recorded[id(node)] = obs.text
        return len(chain), resolved, True

    # -- execution ------------------------------------------------------

    def next_trajectory_id(self) -> str:
        tid = f"{self._counter:03d}"
        self._counter += 1
        return tid

    def execute_path(self, path: TodoPath) -> Trajectory:
        """Execute a validated path's unexplored suffix; resolve its nodes."""
        ensure_path(self.forest, path)
        anchor, remaining = explored_prefix(self.forest, path)
        start_summary = self.forest.state(path.start_state).summary

        traj = Trajectory(
            id=self.next_trajectory_id(),
            mode=self.mode,
            origin_path=path,
            start_summary=start_summary,
            replayed_prefix_len=0,
        )
        replayed, prior, positioned = self._reach_anchor(path)
        traj.replayed_prefix_len = replayed
        traj.prior_labels = prior
        if not positioned:
            traj.truncated = True
            return traj

        cursor: StateNode | Node = anchor
        for label in remaining:
            node = cursor.child(label)
            if self._budget_left() <= 0:
                traj.truncated = True
                break
            if self.mode == "agent":
                ok = self._execute_agent_step(node, label, traj)
            else:
                ok = self._execute_action_step(node, label, traj)
            if not ok:
                break
            cursor = node
        return traj

    def _execute_action_step(self, node: Node, label: str, traj: Trajectory) -> bool:
        obs = self.env.step(label)
        self.recorded[id(node)] = obs.text
        key = self.key_result_fn(label, obs)
        checkpoint = None
        if self.snapshots and not obs.terminal:
            checkpoint = self.env.snapshot()
        record_outcome(
            node,
            key,
            failed=is_failure(obs.text),
            trajectory_ref=traj.id,
            checkpoint=checkpoint,
        )
        traj.records.append(StepRecord(action=label, observation=obs, key_result=key))
        if obs.terminal:
            traj.truncated = True
            return False
        return True

    def _execute_agent_step(self, node: Node, task: str, traj: Trajectory) -> bool:
        sub_budget = min(self.budget.subagent_step_budget, self._budget_left())
        records, completed = run_subagent(
            self.env,
            task,
            self.llm,
            sub_budget,
            background=self.background,
            parse_retry_limit=self.budget.parse_retry_limit,
        )
        traj.records.extend(records)
        if records:
            key = summarize_key_result(self.llm, task, records)
            failed = not completed
        else:
            key = "action failed: the sub-agent took no steps"
            failed = True
        checkpoint = None
        terminal = bool(records) and records[-1].observation.terminal
        if self.snapshots and not terminal:
            checkpoint = self.env.snapshot()
        record_outcome(node, key, failed=failed, trajectory_ref=traj.id, checkpoint=checkpoint)
        if terminal:
            traj.truncated = True
            return False
        return True


def run_subagent(
    env: CountingEnv,
    task: str,
    llm: Provider,
    step_budget: int,
    background: str = "",
    parse_retry_limit: int = 3,
) -> tuple[list[StepRecord], bool]:
    """ReAct sub-agent: one thought and one action per turn.

    Returns (records, completed). The agent signals completion by
    emitting the action "stop"; exhausting the budget or losing the
    episode counts as not completed.
    """
    records: list[StepRecord] = []
    for _ in range(step_budget):
        bindings = {
            "background": background,
            "task": task,
            "history": render_history(records),
        }
        try:
            parsed, _raw = invoke(
                llm, "actor_subagent", bindings, parse_retries=parse_retry_limit
            )
        except Exception as exc:  # provider exhausted or transport failure
            log.warning("sub-agent call failed for task %r: %s", task, exc)
            return records, False
        action = parsed["action"].strip()
        if action.lower() == SUBAGENT_STOP:
            return records, True
        obs = env.step(action)
        records.append(
            StepRecord(action=action, observation=obs, thought=parsed.get("thought"))
        )
        if obs.terminal:
            return records, obs.score_delta > 0
    return records, False


def summarize_key_result(llm: Provider, action: str, records: list[StepRecord]) -> str:
    """Key result for an agent-mode node via the summarize template."""
    observation = "\n".join(
        f"[Action] {r.action}\n[Observation] {r.observation.text}" for r in records
    )
    try:
        parsed, _raw = invoke(
            llm,
            "keyresult_summarize",
            {
                "max_chars": KEY_RESULT_CHARS,
                "action": action,
                "observation": observation,
            },
        )
        return parsed
    except Exception as exc:
        log.warning("key-result summarization failed: %s", exc)
        return rule_key_result(action, records[-1].observation)
