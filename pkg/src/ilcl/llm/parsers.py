"""Parsers for the response grammars the prompt templates demand.

All parsers are pure text functions. When a model repeats a tag, the
last occurrence wins: prompts embed example outputs, and the final
answer is the one that matters.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass

from ..errors import ResponseParseError

log = logging.getLogger(__name__)

NONE_WORD = "None"


def is_none(text: str) -> bool:
    return text.strip() == NONE_WORD


def _last_tag_block(text: str, tag: str) -> str | None:
    """Content of the last <tag>...</tag> pair, trimmed; None when absent."""
    open_mark, close_mark = f"<{tag}>", f"</{tag}>"
    start = text.rfind(open_mark)
    if start == -1:
        return None
    inner_start = start + len(open_mark)
    end = text.find(close_mark, inner_start)
    if end == -1:
        raise ResponseParseError(f"unclosed tag <{tag}>", position=start)
    return text[inner_start:end].strip()


def extract_tagged(text: str, tags, optional=()) -> dict:
    """Map of tag name to trimmed content; required tags must be present."""
    blocks = {}
    for tag in list(tags) + list(optional):
        content = _last_tag_block(text, tag)
        if content is None:
            if tag in optional:
                continue
            raise ResponseParseError(f"missing tag <{tag}>", position=len(text))
        blocks[tag] = content
    return blocks


_FENCE = re.compile(r"```json\s*\n(.*?)```", re.DOTALL)
_ANY_FENCE = re.compile(r"```\s*\n([\[{].*?)```", re.DOTALL)


def extract_json_block(text: str):
    """First fenced JSON block, parsed. Lists and objects only."""
    match = _FENCE.search(text) or _ANY_FENCE.search(text)
    if not match:
        raise ResponseParseError("no fenced json block found")
    raw = match.group(1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ResponseParseError(
            f"invalid json in fenced block: {exc.msg}", position=match.start(1) + exc.pos
        ) from exc
    if not isinstance(value, (list, dict)):
        raise ResponseParseError("fenced json must be a list or an object")
    return value


def extract_numbered(text: str, base: str = "modification") -> list[str]:
    """Ordered contents of <base1>..<baseN>; a lone None means no items."""
    pattern = re.compile(rf"<{base}(\d+)>(.*?)</{base}\1>", re.DOTALL)
    found = [(int(m.group(1)), m.group(2).strip()) for m in pattern.finditer(text)]
    if not found:
        raise ResponseParseError(f"no <{base}N> tags found")
    found.sort(key=lambda item: item[0])
    numbers = [n for n, _ in found]
    if numbers != list(range(numbers[0], numbers[0] + len(numbers))):
        log.warning("%s tags are not consecutively numbered: %s", base, numbers)
    return [content for _, content in found if not is_none(content) and content]


@dataclass(frozen=True)
class Decision:
    kind: str  # one of the allowed words, lowercased
    content: str | None = None


def extract_decision(
    text: str, allowed=("accept", "revise", "reject"), content_tag: str = "content"
) -> Decision:
    """Parse a <decision> (case-insensitive); revisions carry their content."""
    blocks = extract_tagged(text, ["decision"], optional=[content_tag])
    word = blocks["decision"].strip().lower()
    if word not in allowed:
        raise ResponseParseError(
            f"unknown decision {blocks['decision'].strip()!r}; expected one of {list(allowed)}"
        )
    content = blocks.get(content_tag)
    if content is not None and is_none(content):
        content = None
    if word == "revise":
        if not content:
            raise ResponseParseError("a Revise decision needs non-empty <content>")
        return Decision("revise", content)
    return Decision(word)


# -- per-template dispatch ----------------------------------------------


def parse_obs_todo(text: str) -> dict:
    blocks = extract_tagged(text, ["todo"], optional=["thought", "missing_observations"])
    blocks["todo"] = None if is_none(blocks["todo"]) else blocks["todo"]
    return blocks


def parse_rule_todo(text: str) -> list[str]:
    value = extract_json_block(text)
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ResponseParseError("rule todos must be a json list of path strings")
    return value


def parse_promote(text: str) -> dict:
    value = extract_json_block(text)
    if not isinstance(value, dict):
        raise ResponseParseError("promotion must be a json object")
    required = {
        "target_missing_observation",
        "selected_path",
        "new_state_name",
        "state_summary",
    }
    missing = sorted(required - set(value))
    if missing:
        raise ResponseParseError(f"promotion json lacks keys: {', '.join(missing)}")
    return value


def parse_loop_control(text: str) -> Decision:
    return extract_decision(text, allowed=("continue", "stop"))


def parse_subagent(text: str) -> dict:
    return extract_tagged(text, ["action"], optional=["thought"])


def parse_modifications(text: str) -> list[str]:
    return extract_numbered(text, base="modification")


def parse_check(text: str) -> Decision:
    return extract_decision(text)


def parse_apply(text: str) -> dict:
    return extract_tagged(text, ["knowledge"], optional=["thought"])


def parse_keyresult(text: str) -> str:
    return extract_tagged(text, ["key_result"])["key_result"]


PARSER_BY_TEMPLATE = {
    "planner_obs_todo": parse_obs_todo,
    "planner_rule_todo": parse_rule_todo,
    "planner_promote": parse_promote,
    "planner_loop_control": parse_loop_control,
    "actor_subagent": parse_subagent,
    "extractor_obs_edits": parse_modifications,
    "extractor_rule_edits": parse_modifications,
    "extractor_check": parse_check,
    "extractor_apply": parse_apply,
    "keyresult_summarize": parse_keyresult,
}
