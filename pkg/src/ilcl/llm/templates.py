"""Prompt templates: {{ var }} substitution plus optional blocks.

A line holding only "{" opens an optional block and a line holding only
"}" closes it; the block is included iff every variable inside it has a
binding. Marker lines never appear in the output. Lines inside fenced
code blocks are never treated as markers, because several prompts carry
bare braces inside their ```json examples.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources

from ..errors import TemplateError

TEMPLATE_IDS = (
    "planner_obs_todo",
    "planner_rule_todo",
    "planner_promote",
    "planner_loop_control",
    "actor_subagent",
    "extractor_obs_edits",
    "extractor_rule_edits",
    "extractor_check",
    "extractor_apply",
    "keyresult_summarize",
)

_VAR = re.compile(r"\{\{\s*(\w+)\s*\}\}")


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    body: str
    required_vars: frozenset


@dataclass(frozen=True)
class _Segment:
    text: str
    optional: bool


def _split_segments(body: str, template_id: str) -> list[_Segment]:
    segments: list[_Segment] = []
    current: list[str] = []
    optional = False
    in_fence = False
    for number, line in enumerate(body.split("\n"), start=1):
        stripped = line.strip()
        if stripped.startswith("```"):
            in_fence = not in_fence
        if not in_fence and stripped in ("{", "}"):
            opening = stripped == "{"
            if opening == optional:
                state = "inside" if optional else "outside"
                raise TemplateError(
                    f"template {template_id!r}: stray {stripped!r} {state} optional block"
                    f" at line {number}"
                )
            segments.append(_Segment("\n".join(current), optional))
            current = []
            optional = opening
            continue
        current.append(line)
    if optional:
        raise TemplateError(f"template {template_id!r}: unclosed optional block")
    segments.append(_Segment("\n".join(current), optional=False))
    return [s for s in segments if s.text]


def _template_text(template_id: str) -> str:
    try:
        path = resources.files("ilcl.llm") / "templates" / f"{template_id}.md"
        return path.read_text(encoding="utf-8")
    except (FileNotFoundError, ModuleNotFoundError) as exc:
        raise TemplateError(f"no template file for {template_id!r}") from exc


_CACHE: dict[str, PromptTemplate] = {}


def load_template(template_id: str) -> PromptTemplate:
    if template_id not in TEMPLATE_IDS:
        raise TemplateError(f"unknown template id {template_id!r}")
    if template_id not in _CACHE:
        body = _template_text(template_id)
        required = {
            var
            for segment in _split_segments(body, template_id)
            if not segment.optional
            for var in _VAR.findall(segment.text)
        }
        _CACHE[template_id] = PromptTemplate(
            id=template_id, body=body, required_vars=frozenset(required)
        )
    return _CACHE[template_id]


def render_template(template_id: str, bindings: dict) -> str:
    """Substitute bindings into the template; optional blocks need full coverage."""
    template = load_template(template_id)
    provided = {k for k, v in bindings.items() if v is not None}
    missing = sorted(template.required_vars - provided)
    if missing:
        raise TemplateError(
            f"template {template_id!r} is missing bindings: {', '.join(missing)}"
        )

    parts = []
    for segment in _split_segments(template.body, template_id):
        if segment.optional:
            needed = set(_VAR.findall(segment.text))
            if not needed <= provided:
                continue
        parts.append(segment.text)
    text = "\n".join(parts)

    def substitute(match: re.Match) -> str:
        return str(bindings[match.group(1)])

    return _VAR.sub(substitute, text)
