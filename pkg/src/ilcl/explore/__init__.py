"""Budgeted exploration: plan TODO paths, execute them, extract knowledge."""

from .actor import PathExecutor, is_failure, rule_key_result, run_subagent
from .extractor import apply_edits, check_edit, extract_edits, mechanical_apply
from .planner import (
    LoopDecision,
    has_promotable_node,
    propose_observation_todo,
    propose_promotion,
    propose_rule_todos,
    should_continue,
)
from .runner import parse_metrics_csv, render_metrics_csv, run_exploration, write_artifacts
from .types import (
    Budget,
    Edit,
    ExplorationResult,
    IterationMetrics,
    Promotion,
    StepRecord,
    Trajectory,
    render_history,
    render_trajectory,
)

__all__ = [
    "Budget",
    "Edit",
    "ExplorationResult",
    "IterationMetrics",
    "LoopDecision",
    "PathExecutor",
    "Promotion",
    "StepRecord",
    "Trajectory",
    "apply_edits",
    "check_edit",
    "extract_edits",
    "has_promotable_node",
    "is_failure",
    "mechanical_apply",
    "parse_metrics_csv",
    "propose_observation_todo",
    "propose_promotion",
    "propose_rule_todos",
    "render_history",
    "render_metrics_csv",
    "render_trajectory",
    "rule_key_result",
    "run_exploration",
    "run_subagent",
    "should_continue",
    "write_artifacts",
]
