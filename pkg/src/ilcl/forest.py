"""The TODO forest: shallow trees of tried and untried steps.

Each tree is rooted at a named state ("init_state" always exists; others
are promoted from well-trodden nodes). A node is one step, either a
primitive action or an agent task depending on the forest mode, and is
Todo until an outcome is recorded. The text rendering is the prompt-ready
form:

    - init_state: Agent's location: Livingroom. ...
      - go north: Agent's location: Kitchen. ... [reach in_kitchen]
      - go west: TODO

    - in_kitchen: Agent is in the Kitchen. ...

Render and parse are inverse for every forest built through the ops here.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .errors import ForestError, PathParseError

INIT_STATE = "init_state"
TODO_MARKER = "TODO"
FAILED_PREFIX = "action failed"
KEY_RESULT_LIMIT = 500
TRUNCATION_MARKER = " ...[truncated]"

_ARROW = "->"
_AGENT_LABEL = re.compile(r'^agent\("(?P<task>.*)"\)$')
_REACH = re.compile(r"^(?P<body>.*?)\s*\[reach (?P<state>[^\]]+)\]$")


def _clip(text: str) -> str:
    """Collapse to one line and cap the length with a visible marker."""
    flat = " ".join(text.split())
    if len(flat) > KEY_RESULT_LIMIT:
        flat = flat[: KEY_RESULT_LIMIT - len(TRUNCATION_MARKER)].rstrip() + TRUNCATION_MARKER
    return flat


@dataclass
class Node:
    label: str
    status: str = "todo"  # "todo" | "done" | "failed"
    key_result: str = ""
    children: list["Node"] = field(default_factory=list)
    promoted_to: str | None = None
    trajectory_ref: str | None = field(default=None, compare=False)
    checkpoint: str | None = field(default=None, compare=False)

    @property
    def resolved(self) -> bool:
        return self.status != "todo"

    def child(self, label: str) -> "Node | None":
        for c in self.children:
            if c.label == label:
                return c
        return None


@dataclass
class StateNode:
    name: str
    summary: str
    children: list[Node] = field(default_factory=list)
    origin: tuple[str, tuple[str, ...]] | None = None
    checkpoint: str | None = field(default=None, compare=False)

    def child(self, label: str) -> Node | None:
        for c in self.children:
            if c.label == label:
                return c
        return None


@dataclass
class Forest:
    states: dict[str, StateNode] = field(default_factory=dict)
    mode: str = "action"  # "action" | "agent"

    def state(self, name: str) -> StateNode | None:
        return self.states.get(name)


@dataclass(frozen=True)
class TodoPath:
    start_state: str
    steps: tuple[str, ...]

    def __str__(self) -> str:
        return f" {_ARROW} ".join((self.start_state,) + self.steps)


@dataclass(frozen=True)
class PathVerdict:
    variant: str  # "ok" | "nonexistent_state" | "redundant" | "too_long" | "malformed"
    new_suffix_start: int = 0
    limit: int = 0
    reason: str = ""

    @property
    def ok(self) -> bool:
        return self.variant == "ok"


def new_forest(init_summary: str, mode: str = "action") -> Forest:
    forest = Forest(mode=mode)
    forest.states[INIT_STATE] = StateNode(INIT_STATE, _clip(init_summary))
    return forest


def parse_path(text: str) -> TodoPath:
    """Parse "state -> step -> ... -> step" into a TodoPath."""
    segments = [s.strip() for s in text.strip().split(_ARROW)]
    if len(segments) < 2:
        raise PathParseError(f"path needs a state and at least one step: {text.strip()!r}")
    if any(not s for s in segments):
        raise PathParseError(f"path has an empty segment: {text.strip()!r}")
    steps = []
    for seg in segments[1:]:
        m = _AGENT_LABEL.match(seg)
        steps.append(m.group("task") if m else seg)
        if not steps[-1]:
            raise PathParseError(f"path has an empty step label: {seg!r}")
    return TodoPath(start_state=segments[0], steps=tuple(steps))


def validate_path(forest: Forest, path: TodoPath | str, max_len: int) -> PathVerdict:
    """Judge a proposed path; every outcome is a verdict, nothing raises."""
    if isinstance(path, str):
        try:
            path = parse_path(path)
        except PathParseError as exc:
            return PathVerdict("malformed", reason=str(exc))
    for step in path.steps:
        if not step or "\n" in step or _ARROW in step or ": " in step:
            return PathVerdict("malformed", reason=f"bad step label {step!r}")
    state = forest.state(path.start_state)
    if state is None:
        return PathVerdict("nonexistent_state")
    if len(path.steps) > max_len:
        return PathVerdict("too_long", limit=max_len)

    existing = 0
    all_resolved = True
    cursor: StateNode | Node = state
    for step in path.steps:
        nxt = cursor.child(step)
        if nxt is None:
            all_resolved = False
            break
        existing += 1
        if not nxt.resolved:
            all_resolved = False
        cursor = nxt
    if existing == len(path.steps) and all_resolved:
        return PathVerdict("redundant")
    return PathVerdict("ok", new_suffix_start=existing)


def ensure_path(forest: Forest, path: TodoPath, max_len: int | None = None) -> list[Node]:
    """Materialize the path, creating Todo nodes for its new suffix."""
    verdict = validate_path(forest, path, max_len if max_len is not None else len(path.steps))
    if not verdict.ok:
        raise ForestError(f"cannot ensure path {path}: verdict {verdict.variant}")
    nodes: list[Node] = []
    cursor: StateNode | Node = forest.state(path.start_state)
    for step in path.steps:
        nxt = cursor.child(step)
        if nxt is None:
            nxt = Node(label=step)
            cursor.children.append(nxt)
        nodes.append(nxt)
        cursor = nxt
    return nodes


def record_outcome(
    node: Node,
    key_result: str,
    failed: bool = False,
    trajectory_ref: str | None = None,
    checkpoint: str | None = None,
) -> None:
    """Resolve a Todo node to Done or Failed; final once set."""
    if node.resolved:
        raise ForestError(f"node '{node.label}' already has an outcome")
    text = _clip(key_result)
    # The "action failed" prefix is the failure signal in rendered text,
    # so the flag and the text must agree.
    failed = failed or text.startswith(FAILED_PREFIX)
    if failed and not text.startswith(FAILED_PREFIX):
        text = f"{FAILED_PREFIX}: {text}" if text else FAILED_PREFIX
    node.status = "failed" if failed else "done"
    node.key_result = text
    node.trajectory_ref = trajectory_ref
    node.checkpoint = checkpoint


def _locate(forest: Forest, node: Node) -> tuple[str, tuple[str, ...]]:
    """Root state and label path for a node that lives in the forest."""
    def walk(cur: Node, trail: tuple[str, ...]):
        trail = trail + (cur.label,)
        if cur is node:
            return trail
        for child in cur.children:
            found = walk(child, trail)
            if found:
                return found
        return None

    for state in forest.states.values():
        for child in state.children:
            found = walk(child, ())
            if found:
                return state.name, found
    raise ForestError("node is not part of this forest")


def promote(forest: Forest, node: Node, new_name: str, summary: str) -> str:
    """Turn a Done node into a new named state rooted at its outcome."""
    if node.status != "done":
        raise ForestError(f"only Done nodes can be promoted, got '{node.status}'")
    if node.promoted_to is not None:
        raise ForestError(f"node already promoted to '{node.promoted_to}'")
    if not new_name or "\n" in new_name or _ARROW in new_name or ": " in new_name:
        raise ForestError(f"bad state name {new_name!r}")
    if new_name in forest.states:
        raise ForestError(f"state '{new_name}' already exists")
    if not summary.strip():
        raise ForestError("a promoted state needs a non-empty summary")
    source, path = _locate(forest, node)
    node.promoted_to = new_name
    forest.states[new_name] = StateNode(
        name=new_name,
        summary=_clip(summary),
        origin=(source, path),
        checkpoint=node.checkpoint,
    )
    return new_name


def explored_prefix(forest: Forest, path: TodoPath) -> tuple[StateNode | Node, list[str]]:
    """Split a path at its first Todo or absent step.

    Returns the deepest resolved node (or the state root when nothing is
    resolved) and the remaining step labels to execute.
    """
    state = forest.state(path.start_state)
    if state is None:
        raise ForestError(f"unknown state '{path.start_state}'")
    cursor: StateNode | Node = state
    consumed = 0
    for step in path.steps:
        nxt = cursor.child(step)
        if nxt is None or not nxt.resolved:
            break
        cursor = nxt
        consumed += 1
    return cursor, list(path.steps[consumed:])


def open_todos(forest: Forest) -> list[TodoPath]:
    """One path per Todo leaf, in deterministic first-created order."""
    paths: list[TodoPath] = []

    def walk(state_name: str, node: Node, trail: tuple[str, ...]):
        trail = trail + (node.label,)
        if not node.resolved and not node.children:
            paths.append(TodoPath(state_name, trail))
        for child in node.children:
            walk(state_name, child, trail)

    for state in forest.states.values():
        for child in state.children:
            walk(state.name, child, ())
    return paths


def _render_label(forest: Forest, label: str) -> str:
    return f'agent("{label}")' if forest.mode == "agent" else label


def render_forest(forest: Forest) -> str:
    """The prompt-ready text form: one block per state, children indented."""
    lines: list[str] = []
    for i, state in enumerate(forest.states.values()):
        if i:
            lines.append("")
        lines.append(f"- {state.name}: {state.summary}")

        def walk(node: Node, depth: int):
            if node.status == "todo":
                body = TODO_MARKER
            else:
                body = node.key_result
            reach = f" [reach {node.promoted_to}]" if node.promoted_to else ""
            indent = "  " * depth
            lines.append(f"{indent}- {_render_label(forest, node.label)}: {body}{reach}")
            for child in node.children:
                walk(child, depth + 1)

        for child in state.children:
            walk(child, 1)
    return "\n".join(lines) + "\n"


def parse_forest(text: str) -> Forest:
    """Parse rendered forest text back into a Forest."""
    forest = Forest()
    state: StateNode | None = None
    stack: list[Node] = []
    promoted: dict[str, tuple[str, tuple[str, ...]]] = {}

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip()
        stripped = line.strip()
        if not stripped or stripped == "...":
            continue
        indent = len(line) - len(line.lstrip())
        if indent % 2 or not stripped.startswith("- "):
            raise ForestError(f"line {line_no}: expected an indented '- ' item")
        body = stripped[2:]
        label, sep, rest = body.partition(": ")
        if not sep:
            if body.endswith(":"):
                label, rest = body[:-1], ""
            else:
                raise ForestError(f"line {line_no}: expected 'label: result'")
        rest = rest.strip()
        depth = indent // 2

        if depth == 0:
            if not rest:
                raise ForestError(f"line {line_no}: state '{label}' has no summary")
            if label in forest.states:
                raise ForestError(f"line {line_no}: duplicate state '{label}'")
            state = StateNode(name=label, summary=rest)
            forest.states[label] = state
            stack = []
            continue
        if state is None:
            raise ForestError(f"line {line_no}: node before any state")
        if depth > len(stack) + 1:
            raise ForestError(f"line {line_no}: indentation jumps a level")

        promoted_to = None
        reach = _REACH.match(rest)
        if reach:
            rest = reach.group("body")
            promoted_to = reach.group("state")

        agent = _AGENT_LABEL.match(label)
        if agent:
            forest.mode = "agent"
            label = agent.group("task")

        if rest == TODO_MARKER:
            node = Node(label=label)
        elif rest.startswith(FAILED_PREFIX):
            node = Node(label=label, status="failed", key_result=rest)
        else:
            node = Node(label=label, status="done", key_result=rest)
        node.promoted_to = promoted_to

        parent_children = state.children if depth == 1 else stack[depth - 2].children
        if any(c.label == label for c in parent_children):
            raise ForestError(f"line {line_no}: duplicate sibling label {label!r}")
        parent_children.append(node)
        stack = stack[: depth - 1] + [node]
        if promoted_to:
            trail = tuple(n.label for n in stack)
            promoted[promoted_to] = (state.name, trail)

    if INIT_STATE not in forest.states:
        raise ForestError(f"forest text lacks '{INIT_STATE}'")
    for name, origin in promoted.items():
        target = forest.state(name)
        if target is None:
            raise ForestError(f"[reach {name}] marker without a matching state")
        target.origin = origin
    return forest


_SERIAL_VERSION = 1


def _node_to_json(node: Node) -> dict:
    return {
        "label": node.label,
        "status": node.status,
        "key_result": node.key_result,
        "promoted_to": node.promoted_to,
        "trajectory_ref": node.trajectory_ref,
        "checkpoint": node.checkpoint,
        "children": [_node_to_json(c) for c in node.children],
    }


def _node_from_json(data: dict) -> Node:
    if data["status"] not in ("todo", "done", "failed"):
        raise ForestError(f"unknown node status {data['status']!r}")
    return Node(
        label=data["label"],
        status=data["status"],
        key_result=data["key_result"],
        promoted_to=data.get("promoted_to"),
        trajectory_ref=data.get("trajectory_ref"),
        checkpoint=data.get("checkpoint"),
        children=[_node_from_json(c) for c in data.get("children", [])],
    )


def serialize(forest: Forest) -> bytes:
    payload = {
        "version": _SERIAL_VERSION,
        "mode": forest.mode,
        "states": [
            {
                "name": s.name,
                "summary": s.summary,
                "origin": [s.origin[0], list(s.origin[1])] if s.origin else None,
                "checkpoint": s.checkpoint,
                "children": [_node_to_json(c) for c in s.children],
            }
            for s in forest.states.values()
        ],
    }
    return (json.dumps(payload, indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def deserialize(data: bytes) -> Forest:
    try:
        payload = json.loads(data.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ForestError(f"forest data is not valid JSON: {exc}")
    version = payload.get("version")
    if version != _SERIAL_VERSION:
        raise ForestError(f"unsupported forest version {version!r}")
    forest = Forest(mode=payload.get("mode", "action"))
    for s in payload.get("states", []):
        origin = s.get("origin")
        if s["name"] in forest.states:
            raise ForestError(f"duplicate state '{s['name']}'")
        forest.states[s["name"]] = StateNode(
            name=s["name"],
            summary=s["summary"],
            origin=(origin[0], tuple(origin[1])) if origin else None,
            checkpoint=s.get("checkpoint"),
            children=[_node_from_json(c) for c in s.get("children", [])],
        )
    if INIT_STATE not in forest.states:
        raise ForestError(f"forest lacks '{INIT_STATE}'")
    for s in forest.states.values():
        if s.origin and s.origin[0] not in forest.states:
            raise ForestError(f"state '{s.name}' has origin in unknown state '{s.origin[0]}'")
    _check_acyclic(forest)
    return forest


def _check_acyclic(forest: Forest) -> None:
    for name in forest.states:
        seen = set()
        cur = name
        while cur is not None:
            if cur in seen:
                raise ForestError(f"origin links of '{name}' form a cycle")
            seen.add(cur)
            origin = forest.states[cur].origin
            cur = origin[0] if origin else None
