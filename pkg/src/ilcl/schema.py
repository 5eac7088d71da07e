"""Parsing of instance-context schema files.

A schema file is UTF-8 markdown with an `#### Observations` section that
declares entity types via bracketed placeholders, and optionally an
`#### Action Rules` section whose record shape is fixed across
environments (action / requirements / key_result / note).

Two entity declaration styles exist:

  block     - [location]:
                - objects: [object], [object], ... / Nothing
                - west: [anything] to [location]/Unknown
  inline    - Position [x, y]: can see [object], [object], ... / Nothing

`/`-separated alternatives in a slot pattern become domain options; the
literal alternatives `Unknown` and `Nothing` set the corresponding
permission flags instead.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import SchemaParseError

OBSERVATIONS_HEADER = "#### Observations"
ACTION_RULES_HEADER = "#### Action Rules"

_BRACKET = re.compile(r"\[([^\[\]]+)\]")


@dataclass(frozen=True)
class AttrSlot:
    name: str
    multiplicity: str = "one"  # "one" | "many"
    domain: str = "free-text"  # "free-text" | "entity-reference" | "enumerated"
    ref_type: str | None = None  # entity type captured by the pattern, if any
    literals: tuple[str, ...] = ()
    unknown_allowed: bool = False
    nothing_allowed: bool = False
    pattern: str = ""  # first non-literal alternative, verbatim
    lead: str = ""  # literal prefix before the first bracket (inline slots)


@dataclass(frozen=True)
class EntityTypeSpec:
    name: str
    key_attribute: str
    slots: tuple[AttrSlot, ...]
    style: str = "block"  # "block" | "inline"
    header_colon: bool = True

    def slot(self, name: str) -> AttrSlot | None:
        for s in self.slots:
            if s.name == name:
                return s
        return None


@dataclass(frozen=True)
class Schema:
    entity_types: tuple[EntityTypeSpec, ...]
    has_action_rules: bool
    source_name: str = "<schema>"
    source_text: str = field(default="", compare=False)

    def entity_type(self, name: str) -> EntityTypeSpec | None:
        for t in self.entity_types:
            if t.name.lower() == name.lower():
                return t
        return None


def _split_alternatives(pattern: str) -> list[str]:
    parts = [p.strip() for p in pattern.split("/")]
    return [p for p in parts if p]


def _is_many(pattern: str) -> bool:
    if ", ..." in pattern or ",..." in pattern:
        return True
    brackets = _BRACKET.findall(pattern)
    return len(brackets) >= 2 and len(set(brackets)) == 1


def _parse_slot(name: str, pattern: str, lead: str, line_no: int) -> AttrSlot:
    alts = _split_alternatives(pattern)
    if not alts:
        raise SchemaParseError(f"slot '{name}' has an empty pattern", line_no)
    unknown_allowed = any(a == "Unknown" for a in alts)
    nothing_allowed = any(a == "Nothing" for a in alts)
    value_alts = [a for a in alts if a not in ("Unknown", "Nothing")]
    domain = "free-text"
    literals: tuple[str, ...] = ()
    main = value_alts[0] if value_alts else ""
    if len(value_alts) > 1:
        if any(_BRACKET.search(a) for a in value_alts):
            raise SchemaParseError(
                f"slot '{name}' mixes bracketed and literal alternatives", line_no
            )
        domain = "enumerated"
        literals = tuple(value_alts)
        main = ""
    elif value_alts:
        stripped = re.sub(r"\s*,\s*(\.\.\.)?", " ", main).strip()
        tokens = stripped.split()
        if tokens and all(_BRACKET.fullmatch(t) for t in tokens):
            domain = "entity-reference"
    return AttrSlot(
        name=name,
        multiplicity="many" if _is_many(main) else "one",
        domain=domain,
        literals=literals,
        unknown_allowed=unknown_allowed,
        nothing_allowed=nothing_allowed,
        pattern=main,
        lead=lead,
    )


def _resolve_ref_types(types: list[EntityTypeSpec]) -> list[EntityTypeSpec]:
    names = {t.name.lower() for t in types}
    resolved = []
    for t in types:
        slots = []
        for s in t.slots:
            ref = None
            for token in _BRACKET.findall(s.pattern):
                if token.strip().lower() in names:
                    ref = token.strip()
            slots.append(AttrSlot(**{**s.__dict__, "ref_type": ref}))
        resolved.append(EntityTypeSpec(t.name, t.key_attribute, tuple(slots), t.style, t.header_colon))
    return resolved


def parse_schema(text: str, source_name: str = "<schema>") -> Schema:
    """Parse schema source text into a Schema.

    Raises SchemaParseError (with a line number) on malformed
    indentation, duplicate type names, or empty input.
    """
    if not text.strip():
        raise SchemaParseError("empty schema source", 1)

    section = None
    types: list[EntityTypeSpec] = []
    has_action_rules = False
    current: dict | None = None  # pending block-style type

    def finish_current():
        nonlocal current
        if current is None:
            return
        names = [s.name for s in current["slots"]]
        if len(names) != len(set(names)):
            raise SchemaParseError(
                f"duplicate slot name in type '{current['name']}'", current["line"]
            )
        types.append(
            EntityTypeSpec(
                name=current["name"],
                key_attribute=current["key"],
                slots=tuple(current["slots"]),
                style="block",
                header_colon=current["colon"],
            )
        )
        current = None

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip()
        stripped = line.strip()
        if not stripped or stripped == "...":
            continue
        if stripped == OBSERVATIONS_HEADER:
            finish_current()
            section = "observations"
            continue
        if stripped == ACTION_RULES_HEADER:
            finish_current()
            section = "action_rules"
            has_action_rules = True
            continue
        if section is None:
            raise SchemaParseError(f"content before any section header: {stripped!r}", line_no)
        if section == "action_rules":
            # The record shape is fixed; the section body is informative only.
            continue

        indent = len(line) - len(line.lstrip())
        if not stripped.startswith("- "):
            raise SchemaParseError(f"expected a '- ' item, got {stripped!r}", line_no)
        body = stripped[2:]

        if indent == 0:
            finish_current()
            header_match = re.match(r"^\[([^\[\]]+)\](:?)\s*(.*)$", body)
            if header_match:
                type_name, colon, rest = header_match.groups()
                if rest:
                    raise SchemaParseError(
                        "block entity header must end at the key placeholder", line_no
                    )
                if any(t.name == type_name for t in types):
                    raise SchemaParseError(f"duplicate entity type '{type_name}'", line_no)
                current = {
                    "name": type_name,
                    "key": type_name,
                    "slots": [],
                    "colon": bool(colon),
                    "line": line_no,
                }
                continue
            inline_match = re.match(r"^(\S+)\s+\[([^\[\]]+)\]:\s*(.+)$", body)
            if inline_match:
                type_name, key_attr, pattern = inline_match.groups()
                if any(t.name == type_name for t in types):
                    continue  # repeated inline example rows describe one type
                lead_match = re.match(r"^([^\[\]]*?)\s*\[", pattern)
                lead = lead_match.group(1).strip() if lead_match else ""
                slot = _parse_slot(lead or "value", pattern[len(lead):].strip() if lead else pattern, lead, line_no)
                types.append(
                    EntityTypeSpec(
                        name=type_name,
                        key_attribute=key_attr,
                        slots=(slot,),
                        style="inline",
                        header_colon=True,
                    )
                )
                continue
            raise SchemaParseError(f"unrecognized entity declaration: {body!r}", line_no)

        if indent == 2:
            if current is None:
                raise SchemaParseError("slot line outside an entity block", line_no)
            if ":" not in body:
                raise SchemaParseError(f"slot line needs 'name: pattern': {body!r}", line_no)
            slot_name, _, pattern = body.partition(":")
            slot_name = slot_name.strip()
            pattern = pattern.strip()
            if slot_name == current["key"]:
                raise SchemaParseError(
                    f"key attribute '{slot_name}' may not also be a slot", line_no
                )
            current["slots"].append(_parse_slot(slot_name, pattern, "", line_no))
            continue

        raise SchemaParseError(f"unexpected indentation of {indent} spaces", line_no)

    finish_current()
    if not types and not has_action_rules:
        raise SchemaParseError("schema declares no entity types and no action rules", 1)
    types = _resolve_ref_types(types)
    return Schema(
        entity_types=tuple(types),
        has_action_rules=has_action_rules,
        source_name=source_name,
        source_text=text,
    )


def load_schema(path) -> Schema:
    from pathlib import Path

    p = Path(path)
    return parse_schema(p.read_text(encoding="utf-8"), source_name=p.name)
