"""The Planner: propose TODOs, promote states, decide loop continuation.

Every proposal goes through the render -> complete -> parse -> validate
chain; a semantic rejection (bad path, duplicate state name) re-prompts
with the reason appended, sharing the parse-retry machinery.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from ..document import Document, list_gaps, render_document
from ..errors import PathParseError, ProviderError, ResponseParseError
from ..forest import (
    Forest,
    Node,
    TodoPath,
    ensure_path,
    open_todos,
    parse_path,
    promote,
    render_forest,
    validate_path,
)
from ..llm.providers import Provider, invoke
from ..schema import Schema
from .types import TODO_DEF, Budget, Promotion

log = logging.getLogger(__name__)

NO_PROMOTION = "None"


@dataclass(frozen=True)
class LoopDecision:
    go_on: bool
    reason: str = ""


def _common_bindings(doc: Document, schema: Schema, forest: Forest, background: str) -> dict:
    return {
        "background": background,
        "todo_def": TODO_DEF,
        "todo_forest": render_forest(forest),
        "knowledge_format": schema.source_text,
        "knowledge": render_document(doc, schema),
    }


def propose_observation_todo(
    llm: Provider,
    doc: Document,
    schema: Schema,
    forest: Forest,
    budget: Budget,
    background: str,
    recent_trajectory: str | None = None,
) -> TodoPath | None:
    """One new observation-gathering path, or None when observations look done."""
    bindings = _common_bindings(doc, schema, forest, background)
    bindings["max_length"] = budget.max_path_length
    bindings["trajectory"] = recent_trajectory

    def validate(parsed) -> None:
        if parsed["todo"] is None:
            return
        verdict = validate_path(forest, parsed["todo"], budget.max_path_length)
        if not verdict.ok:
            raise ResponseParseError(
                f"proposed path was rejected: {verdict.variant} {verdict.reason}".strip()
            )

    parsed = _invoke_validated(
        llm, "planner_obs_todo", bindings, budget, validate
    )
    if parsed is None or parsed["todo"] is None:
        return None
    path = parse_path(parsed["todo"])
    ensure_path(forest, path, budget.max_path_length)
    return path


def propose_rule_todos(
    llm: Provider,
    doc: Document,
    schema: Schema,
    forest: Forest,
    budget: Budget,
    background: str,
    recent_trajectory: str | None = None,
) -> list[TodoPath]:
    """Up to num_todo validated rule-discovery paths; invalid ones are dropped."""
    bindings = {
        "max_length": budget.max_path_length,
        "num_todo": budget.num_todo,
        "todo_def": TODO_DEF,
        "background": background,
        "todo_forest": render_forest(forest),
        "trajectory": recent_trajectory,
    }
    parsed = _invoke_validated(llm, "planner_rule_todo", bindings, budget, None)
    if parsed is None:
        return []
    accepted: list[TodoPath] = []
    for candidate in parsed[: budget.num_todo]:
        verdict = validate_path(forest, candidate, budget.max_path_length)
        if not verdict.ok:
            log.info("dropping rule TODO %r: %s", candidate, verdict.variant)
            continue
        path = parse_path(candidate)
        ensure_path(forest, path, budget.max_path_length)
        accepted.append(path)
    return accepted


def _find_node(forest: Forest, path: TodoPath) -> Node | None:
    cursor = forest.state(path.start_state)
    if cursor is None:
        return None
    node = None
    for label in path.steps:
        node = cursor.child(label)
        if node is None:
            return None
        cursor = node
    return node


def has_promotable_node(forest: Forest) -> bool:
    def walk(node: Node) -> bool:
        if node.status == "done" and node.promoted_to is None:
            return True
        return any(walk(c) for c in node.children)

    return any(walk(c) for state in forest.states.values() for c in state.children)


def propose_promotion(
    llm: Provider,
    doc: Document,
    schema: Schema,
    forest: Forest,
    budget: Budget,
    background: str,
) -> Promotion | None:
    """Ask for one state promotion and apply it; None means no candidate."""
    bindings = _common_bindings(doc, schema, forest, background)

    def validate(parsed) -> None:
        if parsed["selected_path"].strip() == NO_PROMOTION:
            return
        try:
            path = parse_path(parsed["selected_path"])
        except PathParseError as exc:
            raise ResponseParseError(f"selected_path does not parse: {exc}")
        node = _find_node(forest, path)
        if node is None:
            raise ResponseParseError("selected_path is not in the TODO forest")
        if node.status != "done":
            raise ResponseParseError(
                f"the selected node is {node.status}, only Done nodes can become states"
            )
        if node.promoted_to is not None:
            raise ResponseParseError("the selected node was already promoted")
        name = parsed["new_state_name"].strip()
        if not name or name in forest.states:
            raise ResponseParseError(f"state name {name!r} is empty or already taken")
        if not parsed["state_summary"].strip():
            raise ResponseParseError("state_summary must not be empty")

    parsed = _invoke_validated(llm, "planner_promote", bindings, budget, validate)
    if parsed is None or parsed["selected_path"].strip() == NO_PROMOTION:
        return None
    path = parse_path(parsed["selected_path"])
    node = _find_node(forest, path)
    promote(forest, node, parsed["new_state_name"].strip(), parsed["state_summary"])
    return Promotion(
        target_gap=parsed["target_missing_observation"],
        selected_path=path,
        new_state_name=parsed["new_state_name"].strip(),
        state_summary=parsed["state_summary"],
    )


def should_continue(
    llm: Provider,
    doc: Document,
    schema: Schema,
    forest: Forest,
    budget: Budget,
    steps_used: int,
    iteration: int,
) -> LoopDecision:
    """Hard budget stops are mechanical; otherwise the planner decides."""
    if steps_used >= budget.max_env_steps or iteration >= budget.max_iterations:
        return LoopDecision(False, "budget-exhausted")
    if not list_gaps(doc, schema) and not open_todos(forest):
        return LoopDecision(False, "gaps-resolved")
    bindings = {
        "steps_used": steps_used,
        "max_env_steps": budget.max_env_steps,
        "iteration": iteration,
        "max_iterations": budget.max_iterations,
        "todo_forest": render_forest(forest),
        "knowledge": render_document(doc, schema),
    }
    parsed = _invoke_validated(llm, "planner_loop_control", bindings, budget, None)
    if parsed is not None and parsed.kind == "stop":
        return LoopDecision(False, "planner-stop")
    return LoopDecision(True)


def _invoke_validated(llm, template_id, bindings, budget: Budget, validate):
    """Invoke with validation; degrade to None when retries are exhausted."""
    try:
        parsed, _raw = invoke(
            llm,
            template_id,
            bindings,
            parse_retries=budget.parse_retry_limit,
            validate=validate,
        )
        return parsed
    except ProviderError as exc:
        log.warning("planner call %s gave up: %s", template_id, exc)
        return None
