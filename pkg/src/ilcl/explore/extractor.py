"""The Extractor: propose document edits, check each one, apply survivors.

Edits are prose, but well-behaved providers emit them in a line grammar
that the mechanical fallback can also interpret:

    Add location <Key> | objects: <value> | west: <value> | ...
    Update location <Key> | <slot>: <value> [| <slot>: <value> ...]
    Add rule | action: <a> | requirements: <r> | key_result: <k> | note: <n>

The apply step normally lets the model rewrite the whole document; when
that keeps violating the schema, the fallback applies parseable edits
mechanically so the loop never deadlocks and the document stays valid.
"""

from __future__ import annotations

import logging

from ..document import (
    ActionRule,
    Document,
    Entity,
    Known,
    KnownList,
    NOTHING,
    UNKNOWN,
    parse_document,
    render_document,
    validate_document,
)
from ..errors import DocumentParseError, ProviderError, ResponseParseError
from ..llm.parsers import Decision
from ..llm.providers import Provider, invoke
from ..schema import Schema
from .types import Budget, Edit

log = logging.getLogger(__name__)

SECTION_TEMPLATES = {
    "observations": "extractor_obs_edits",
    "action_rules": "extractor_rule_edits",
}


def extract_edits(
    llm: Provider,
    doc: Document,
    schema: Schema,
    trajectory_text: str,
    section: str,
    background: str,
    budget: Budget,
    evidence: str,
) -> list[Edit]:
    """Proposed edits for one section from one trajectory; [] on None."""
    bindings = {
        "background": background,
        "trajectory": trajectory_text,
        "knowledge_definition": schema.source_text,
        "knowledge": render_document(doc, schema),
    }
    try:
        bodies, _raw = invoke(
            llm,
            SECTION_TEMPLATES[section],
            bindings,
            parse_retries=budget.parse_retry_limit,
        )
    except ProviderError as exc:
        log.warning("edit extraction for %s gave up: %s", section, exc)
        return []
    return [
        Edit(id=f"{evidence}/{section}/{i}", section=section, body=body, evidence=evidence)
        for i, body in enumerate(bodies)
    ]


def check_edit(
    llm: Provider,
    edit: Edit,
    doc: Document,
    schema: Schema,
    trajectory_text: str,
    background: str,
    budget: Budget,
) -> Edit:
    """Accept, revise, or reject one edit; the decision lands on the edit."""
    bindings = {
        "background": background,
        "knowledge_definition": schema.source_text,
        "knowledge": render_document(doc, schema),
        "trajectory": trajectory_text,
        "modification": edit.body,
    }
    try:
        decision, _raw = invoke(
            llm, "extractor_check", bindings, parse_retries=budget.parse_retry_limit
        )
    except ProviderError as exc:
        log.warning("edit check gave up, rejecting %s: %s", edit.id, exc)
        decision = Decision("reject")
    edit.status = {"accept": "accepted", "revise": "revised", "reject": "rejected"}[
        decision.kind
    ]
    if decision.kind == "revise":
        edit.resolution = decision.content
    return edit


MODIFICATION_HEADER = "Modification {n}:"


def render_modification_list(edits: list[Edit]) -> str:
    blocks = []
    for i, edit in enumerate(edits, start=1):
        blocks.append(f"{MODIFICATION_HEADER.format(n=i)}\n{edit.effective_body}")
    return "\n\n".join(blocks)


def apply_edits(
    llm: Provider,
    doc: Document,
    schema: Schema,
    edits: list[Edit],
    budget: Budget,
) -> Document:
    """Apply surviving edits; the result always validates.

    The model rewrites the document; schema violations re-prompt up to
    the retry limit, then the mechanical fallback takes over.
    """
    surviving = [e for e in edits if e.status in ("accepted", "revised")]
    if not surviving:
        return doc
    bindings = {
        "knowledge_definition": schema.source_text,
        "knowledge": render_document(doc, schema),
        "modification_list": render_modification_list(surviving),
    }

    def validate(parsed) -> None:
        try:
            parse_document(parsed["knowledge"], schema)
        except DocumentParseError as exc:
            raise ResponseParseError(f"rewritten document violates the schema: {exc}")

    try:
        parsed, _raw = invoke(
            llm,
            "extractor_apply",
            bindings,
            parse_retries=budget.parse_retry_limit,
            validate=validate,
        )
        new_doc = parse_document(parsed["knowledge"], schema)
        new_doc.meta = doc.meta
        return new_doc
    except ProviderError as exc:
        log.warning("apply kept violating the schema, using mechanical fallback: %s", exc)
        return mechanical_apply(doc, schema, surviving)


# -- mechanical fallback --------------------------------------------------


def parse_edit_body(body: str) -> tuple[str, dict] | None:
    """Parse the line grammar; None when the body doesn't follow it."""
    flat = " ".join(body.split())
    parts = [p.strip() for p in flat.split("|")]
    head = parts[0]
    fields: dict[str, str] = {}
    for part in parts[1:]:
        name, sep, value = part.partition(":")
        if not sep:
            return None
        fields[name.strip()] = value.strip()
    if head.startswith("Add location ") and len(head) > len("Add location "):
        return "add_location", {"key": head[len("Add location "):], "slots": fields}
    if head.startswith("Update location ") and len(head) > len("Update location "):
        if not fields:
            return None
        return "update_location", {"key": head[len("Update location "):], "slots": fields}
    if head == "Add rule" and "action" in fields:
        return "add_rule", {"fields": fields}
    return None


def _slot_value(slot, text: str):
    if text == "Unknown":
        return UNKNOWN
    if text in ("Nothing", "None", ""):
        return NOTHING
    if slot.multiplicity == "many":
        return KnownList(p.strip() for p in text.split(",") if p.strip())
    return Known(text)


def mechanical_apply(doc: Document, schema: Schema, edits: list[Edit]) -> Document:
    """Adds are appended, updates applied slot-wise, the rest skipped.

    Every single edit is validated on a scratch copy first, so a bad edit
    is dropped rather than corrupting the document.
    """
    result = doc.copy()
    for edit in edits:
        parsed = parse_edit_body(edit.effective_body)
        if parsed is None:
            log.info("mechanical apply skips unparseable edit %s", edit.id)
            continue
        kind, data = parsed
        candidate = result.copy()
        if kind == "add_rule":
            fields = data["fields"]
            candidate.action_rules.append(
                ActionRule(
                    action=fields.get("action", ""),
                    requirements=fields.get("requirements", ""),
                    key_result=fields.get("key_result", ""),
                    note="" if fields.get("note", "None") == "None" else fields["note"],
                )
            )
        else:
            spec = schema.entity_types[0] if schema.entity_types else None
            if spec is None:
                continue
            if kind == "add_location":
                if candidate.get_entity(spec.name, data["key"]) is not None:
                    continue
                entity = Entity(spec.name, data["key"])
                for slot in spec.slots:
                    raw = data["slots"].get(slot.name)
                    if raw is None:
                        entity.attrs[slot.name] = UNKNOWN if slot.unknown_allowed else NOTHING
                    else:
                        entity.attrs[slot.name] = _slot_value(slot, raw)
                candidate.add_entity(entity)
            else:  # update_location
                entity = candidate.get_entity(spec.name, data["key"])
                if entity is None:
                    continue
                for name, raw in data["slots"].items():
                    slot = spec.slot(name)
                    if slot is None:
                        entity = None
                        break
                    entity.attrs[name] = _slot_value(slot, raw)
                if entity is None:
                    continue
        if validate_document(candidate, schema):
            log.info("mechanical apply drops invalid edit %s", edit.id)
            continue
        result = candidate
    return result
