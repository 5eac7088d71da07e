"""The instance-context document: typed entities plus action rules.

A Document is the durable product of an exploration run. It renders to
deterministic markdown (`#### Observations` then `#### Action Rules`),
parses back losslessly, validates against a Schema, and exposes its
knowledge gaps (Unknown attributes and referenced-but-missing entities).

Value semantics for a slot:

  Known("exit (without door) to Bathroom")   resolved text
  Known("exit (without door) to Unknown")    a partially known value; the
                                             word Unknown inside a Known
                                             text still counts as a gap
  KnownList(("cow", "grass"))                list-valued slot
  UNKNOWN                                    the bare Unknown marker
  NOTHING                                    explicitly empty ("Nothing";
                                             "None" parses as an alias)
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import DocumentParseError
from .schema import (
    ACTION_RULES_HEADER,
    OBSERVATIONS_HEADER,
    AttrSlot,
    EntityTypeSpec,
    Schema,
)

_UNKNOWN_WORD = re.compile(r"\bUnknown\b")


@dataclass(frozen=True)
class AttrValue:
    kind: str  # "known" | "known_list" | "unknown" | "nothing"
    text: str = ""
    items: tuple[str, ...] = ()

    @property
    def is_known(self) -> bool:
        return self.kind in ("known", "known_list")

    def __repr__(self):
        if self.kind == "known":
            return f"Known({self.text!r})"
        if self.kind == "known_list":
            return f"KnownList({self.items!r})"
        return self.kind.upper()


def Known(text: str) -> AttrValue:
    return AttrValue("known", text=text)


def KnownList(items) -> AttrValue:
    return AttrValue("known_list", items=tuple(items))


UNKNOWN = AttrValue("unknown")
NOTHING = AttrValue("nothing")


@dataclass
class Entity:
    type_name: str
    key: str
    attrs: dict[str, AttrValue] = field(default_factory=dict)

    def entity_id(self) -> str:
        return f"{self.type_name.lower()}|{self.key.lower()}"


@dataclass
class ActionRule:
    action: str
    requirements: str = ""
    key_result: str = ""
    note: str = ""


@dataclass
class DocMeta:
    instance_id: str = ""
    env_steps_consumed: int = 0
    iteration: int = 0


@dataclass
class Document:
    entities: dict[str, Entity] = field(default_factory=dict)
    action_rules: list[ActionRule] = field(default_factory=list)
    meta: DocMeta = field(default_factory=DocMeta, compare=False)

    def add_entity(self, entity: Entity) -> None:
        self.entities[entity.entity_id()] = entity

    def get_entity(self, type_name: str, key: str) -> Entity | None:
        return self.entities.get(f"{type_name.lower()}|{key.lower()}")

    def copy(self) -> "Document":
        return Document(
            entities={
                k: Entity(e.type_name, e.key, dict(e.attrs))
                for k, e in self.entities.items()
            },
            action_rules=[
                ActionRule(r.action, r.requirements, r.key_result, r.note)
                for r in self.action_rules
            ],
            meta=DocMeta(self.meta.instance_id, self.meta.env_steps_consumed, self.meta.iteration),
        )


@dataclass(frozen=True)
class Violation:
    message: str
    line: int | None = None
    code: str = ""

    def __str__(self):
        if self.line is not None:
            return f"line {self.line}: {self.message}"
        return self.message


@dataclass(frozen=True)
class GapDescriptor:
    kind: str  # "unknown-attribute" | "missing-entity" | "untested-action"
    rendered: str
    entity_key: str | None = None
    slot: str | None = None


@dataclass
class CoverageReport:
    locations_found: int = 0
    locations_total: int = 0
    objects_found: int = 0
    objects_total: int = 0
    rules_valid: int = 0
    rules_total: int = 0
    unknown_count: int = 0

    @staticmethod
    def _fraction(found: int, total: int) -> float:
        return 1.0 if total == 0 else found / total

    @property
    def locations_fraction(self) -> float:
        return self._fraction(self.locations_found, self.locations_total)

    @property
    def objects_fraction(self) -> float:
        return self._fraction(self.objects_found, self.objects_total)

    @property
    def rules_fraction(self) -> float:
        return self._fraction(self.rules_valid, self.rules_total)


def _render_value(value: AttrValue) -> str:
    if value.kind == "unknown":
        return "Unknown"
    if value.kind == "nothing":
        return "Nothing"
    if value.kind == "known_list":
        return ", ".join(value.items)
    return value.text


def _render_multiline_field(name: str, text: str, out: list[str]) -> None:
    if "\n" in text:
        out.append(f"  - {name}:")
        for bullet in text.split("\n"):
            out.append(f"    {bullet}")
    else:
        out.append(f"  - {name}: {text}")


def render_document(doc: Document, schema: Schema) -> str:
    """Render a Document to its canonical markdown text.

    Raises DocumentParseError with the violations if the document does
    not validate; no partial output is ever produced.
    """
    violations = validate_document(doc, schema)
    if violations:
        raise DocumentParseError(violations)

    lines: list[str] = [OBSERVATIONS_HEADER, ""]
    prev_style = None
    first = True
    for entity in doc.entities.values():
        spec = schema.entity_type(entity.type_name)
        if spec.style == "block" and not first:
            lines.append("")
        elif spec.style == "inline" and prev_style == "block":
            lines.append("")
        if spec.style == "inline":
            slot = spec.slots[0]
            rendered = _render_value(entity.attrs[slot.name])
            lead = f"{slot.lead} " if slot.lead else ""
            lines.append(f"- {spec.name} [{entity.key}]: {lead}{rendered}".rstrip())
        else:
            colon = ":" if spec.header_colon else ""
            lines.append(f"- {entity.key}{colon}")
            for slot in spec.slots:
                _render_multiline_field(slot.name, _render_value(entity.attrs[slot.name]), lines)
        prev_style = spec.style
        first = False

    if schema.has_action_rules:
        lines.append("")
        lines.append(ACTION_RULES_HEADER)
        for rule in doc.action_rules:
            lines.append("")
            lines.append(f"- action: {rule.action}")
            _render_multiline_field("requirements", rule.requirements, lines)
            _render_multiline_field("key_result", rule.key_result, lines)
            lines.append(f"  - note: {rule.note if rule.note else 'None'}")
    return "\n".join(lines) + "\n"


def _parse_value(slot: AttrSlot, raw: str, line_no: int, violations: list[Violation]) -> AttrValue:
    text = raw.strip()
    if text == "Unknown":
        if not slot.unknown_allowed:
            violations.append(
                Violation(f"slot '{slot.name}' does not allow Unknown", line_no, "domain")
            )
        return UNKNOWN
    if text in ("Nothing", "None", ""):
        if not slot.nothing_allowed:
            violations.append(
                Violation(f"slot '{slot.name}' does not allow Nothing", line_no, "domain")
            )
        return NOTHING
    if slot.domain == "enumerated" and text not in slot.literals:
        violations.append(
            Violation(
                f"slot '{slot.name}' value {text!r} is not one of {list(slot.literals)}",
                line_no,
                "domain",
            )
        )
    if slot.multiplicity == "many":
        return KnownList(part.strip() for part in text.split(",") if part.strip())
    return Known(text)


def _match_entity_header(body: str, schema: Schema):
    """Return (spec, key, inline_rest or None) for a top-level item line."""
    for spec in schema.entity_types:
        if spec.style == "inline":
            m = re.match(
                rf"^{re.escape(spec.name)} \[(?P<key>[^\]]*)\]:(?P<rest>.*)$", body
            )
            if m:
                return spec, m.group("key"), m.group("rest").strip()
    for spec in schema.entity_types:
        if spec.style == "block":
            if spec.header_colon:
                if body.endswith(":") and len(body) > 1:
                    return spec, body[:-1].strip(), None
            elif ":" not in body:
                return spec, body.strip(), None
    return None, None, None


def parse_document(text: str, schema: Schema) -> Document:
    """Parse rendered document text back into a Document.

    Raises DocumentParseError carrying per-line violations when the text
    does not fit the schema (unknown entity type, missing slot, value
    outside its domain).
    """
    violations: list[Violation] = []
    doc = Document()
    section = None
    entity: Entity | None = None
    entity_spec: EntityTypeSpec | None = None
    entity_line = 0
    rule: ActionRule | None = None
    pending_field: str | None = None  # multi-line requirements/key_result collector
    pending_lines: list[str] = []

    def flush_pending():
        nonlocal pending_field, pending_lines
        if rule is not None and pending_field is not None:
            setattr(rule, pending_field, "\n".join(pending_lines))
        pending_field = None
        pending_lines = []

    def finish_entity(line_no: int):
        nonlocal entity, entity_spec
        if entity is None:
            return
        for slot in entity_spec.slots:
            if slot.name not in entity.attrs:
                violations.append(
                    Violation(
                        f"missing slot '{slot.name}' for entity '{entity.key}'",
                        entity_line,
                        "missing-slot",
                    )
                )
                entity.attrs[slot.name] = UNKNOWN
        if doc.get_entity(entity.type_name, entity.key) is not None:
            violations.append(
                Violation(f"duplicate entity '{entity.key}'", entity_line, "duplicate")
            )
        doc.add_entity(entity)
        entity = None
        entity_spec = None

    def finish_rule():
        nonlocal rule
        flush_pending()
        if rule is None:
            return
        if any(r.action == rule.action for r in doc.action_rules):
            violations.append(
                Violation(f"duplicate action rule '{rule.action}'", None, "duplicate")
            )
        doc.action_rules.append(rule)
        rule = None

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip()
        stripped = line.strip()
        if stripped == OBSERVATIONS_HEADER:
            finish_entity(line_no)
            finish_rule()
            section = "observations"
            continue
        if stripped == ACTION_RULES_HEADER:
            finish_entity(line_no)
            finish_rule()
            if not schema.has_action_rules:
                violations.append(
                    Violation("schema has no Action Rules section", line_no, "section")
                )
            section = "action_rules"
            continue
        if not stripped:
            continue
        if section is None:
            violations.append(
                Violation(f"content before any section header: {stripped!r}", line_no, "section")
            )
            continue

        indent = len(line) - len(line.lstrip())

        if section == "observations":
            if indent == 0 and stripped.startswith("- "):
                finish_entity(line_no)
                spec, key, inline_rest = _match_entity_header(stripped[2:], schema)
                if spec is None:
                    violations.append(
                        Violation(f"unknown entity type for line {stripped!r}", line_no, "unknown-type")
                    )
                    continue
                if spec.style == "inline":
                    slot = spec.slots[0]
                    value_text = inline_rest
                    if slot.lead and value_text.startswith(slot.lead):
                        value_text = value_text[len(slot.lead):].strip()
                    e = Entity(spec.name, key)
                    e.attrs[slot.name] = _parse_value(slot, value_text, line_no, violations)
                    if doc.get_entity(spec.name, key) is not None:
                        violations.append(
                            Violation(f"duplicate entity '{key}'", line_no, "duplicate")
                        )
                    doc.add_entity(e)
                else:
                    entity = Entity(spec.name, key)
                    entity_spec = spec
                    entity_line = line_no
                continue
            if indent == 2 and stripped.startswith("- ") and entity is not None:
                name, sep, value = stripped[2:].partition(":")
                if not sep:
                    violations.append(
                        Violation(f"slot line needs 'name: value': {stripped!r}", line_no, "syntax")
                    )
                    continue
                slot = entity_spec.slot(name.strip())
                if slot is None:
                    violations.append(
                        Violation(
                            f"unknown slot '{name.strip()}' for entity '{entity.key}'",
                            line_no,
                            "unknown-slot",
                        )
                    )
                    continue
                if slot.name in entity.attrs:
                    violations.append(
                        Violation(f"slot '{slot.name}' appears twice", line_no, "duplicate")
                    )
                entity.attrs[slot.name] = _parse_value(slot, value, line_no, violations)
                continue
            violations.append(
                Violation(f"unexpected line in Observations: {stripped!r}", line_no, "syntax")
            )
            continue

        # Action Rules section
        if indent == 0 and stripped.startswith("- action:"):
            finish_rule()
            rule = ActionRule(action=stripped[len("- action:"):].strip())
            continue
        if rule is None:
            violations.append(
                Violation(f"unexpected line in Action Rules: {stripped!r}", line_no, "syntax")
            )
            continue
        if indent == 2 and stripped.startswith("- "):
            flush_pending()
            name, sep, value = stripped[2:].partition(":")
            name = name.strip()
            value = value.strip()
            if name not in ("requirements", "key_result", "note") or not sep:
                violations.append(
                    Violation(f"unknown action rule field {name!r}", line_no, "unknown-field")
                )
                continue
            if name == "note":
                rule.note = "" if value in ("None", "") else value
            elif value:
                setattr(rule, name, value)
            else:
                pending_field = name
                pending_lines = []
            continue
        if indent >= 4 and pending_field is not None:
            pending_lines.append(stripped)
            continue
        violations.append(
            Violation(f"unexpected line in Action Rules: {stripped!r}", line_no, "syntax")
        )

    finish_entity(0)
    finish_rule()

    if section is None:
        violations.append(Violation("missing '#### Observations' header", 1, "section"))

    more = validate_document(doc, schema)
    seen = {str(v) for v in violations}
    violations.extend(v for v in more if str(v) not in seen)
    if violations:
        raise DocumentParseError(violations)
    return doc


def validate_document(doc: Document, schema: Schema) -> list[Violation]:
    """Check every Document invariant; an empty list means the doc is valid."""
    violations: list[Violation] = []

    seen_ids = set()
    for entity in doc.entities.values():
        spec = schema.entity_type(entity.type_name)
        if spec is None:
            violations.append(
                Violation(f"unknown entity type '{entity.type_name}'", None, "unknown-type")
            )
            continue
        if not entity.key or "\n" in entity.key:
            violations.append(
                Violation(f"bad entity key {entity.key!r}", None, "key")
            )
        eid = entity.entity_id()
        if eid in seen_ids:
            violations.append(Violation(f"duplicate entity '{entity.key}'", None, "duplicate"))
        seen_ids.add(eid)
        for slot in spec.slots:
            if slot.name not in entity.attrs:
                violations.append(
                    Violation(
                        f"missing slot '{slot.name}' for entity '{entity.key}'",
                        None,
                        "missing-slot",
                    )
                )
        for name, value in entity.attrs.items():
            slot = spec.slot(name)
            if slot is None:
                violations.append(
                    Violation(f"unknown slot '{name}' for entity '{entity.key}'", None, "unknown-slot")
                )
                continue
            if value.kind == "unknown" and not slot.unknown_allowed:
                violations.append(
                    Violation(f"slot '{name}' does not allow Unknown", None, "domain")
                )
            elif value.kind == "nothing" and not slot.nothing_allowed:
                violations.append(
                    Violation(f"slot '{name}' does not allow Nothing", None, "domain")
                )
            elif value.kind == "known":
                if slot.multiplicity == "many":
                    violations.append(
                        Violation(f"slot '{name}' is list-valued", None, "multiplicity")
                    )
                if not value.text or "\n" in value.text:
                    violations.append(
                        Violation(f"slot '{name}' has empty or multi-line text", None, "value")
                    )
                elif slot.domain == "enumerated" and value.text not in slot.literals:
                    violations.append(
                        Violation(
                            f"slot '{name}' value {value.text!r} is not one of {list(slot.literals)}",
                            None,
                            "domain",
                        )
                    )
            elif value.kind == "known_list":
                if slot.multiplicity != "many":
                    violations.append(
                        Violation(f"slot '{name}' is single-valued", None, "multiplicity")
                    )
                if not value.items or any(not i or "\n" in i for i in value.items):
                    violations.append(
                        Violation(f"slot '{name}' has an empty list or item", None, "value")
                    )

    if doc.action_rules and not schema.has_action_rules:
        violations.append(Violation("schema has no Action Rules section", None, "section"))
    seen_actions = set()
    for rule in doc.action_rules:
        if not rule.action or "\n" in rule.action:
            violations.append(Violation(f"bad rule action {rule.action!r}", None, "value"))
        if rule.action in seen_actions:
            violations.append(
                Violation(f"duplicate action rule '{rule.action}'", None, "duplicate")
            )
        seen_actions.add(rule.action)
    return violations


def _value_regex(slot: AttrSlot) -> re.Pattern | None:
    """Build a regex from the slot pattern that captures its entity reference."""
    if not slot.ref_type or not slot.pattern:
        return None
    parts = re.split(r"(\[[^\[\]]+\])", slot.pattern)
    last_ref = max(
        (i for i, p in enumerate(parts) if p == f"[{slot.ref_type}]"),
        default=None,
    )
    if last_ref is None:
        return None
    out = []
    for i, part in enumerate(parts):
        if i == last_ref:
            out.append(r"(?P<ref>.+)")
        elif re.fullmatch(r"\[[^\[\]]+\]", part):
            out.append(r".+?")
        else:
            out.append(re.escape(part))
    return re.compile("^" + "".join(out) + "$")


def value_reference(slot: AttrSlot, value: AttrValue) -> list[str]:
    """Entity keys referenced by a slot value, per the slot's pattern."""
    refs: list[str] = []
    if value.kind == "known":
        rx = _value_regex(slot)
        if rx:
            m = rx.match(value.text)
            if m:
                refs.append(m.group("ref").strip())
    elif value.kind == "known_list" and slot.domain == "entity-reference" and slot.ref_type:
        refs.extend(value.items)
    return [r for r in refs if r and r not in ("Unknown", "Nothing", "None")]


def list_gaps(doc: Document, schema: Schema) -> list[GapDescriptor]:
    """Knowledge gaps: Unknown attributes, then referenced-but-missing entities.

    Order is deterministic: entities in insertion order, slots in schema
    order, then missing entities in first-reference order.
    """
    gaps: list[GapDescriptor] = []
    missing: list[tuple[str, str]] = []
    missing_seen = set()

    for entity in doc.entities.values():
        spec = schema.entity_type(entity.type_name)
        if spec is None:
            continue
        for slot in spec.slots:
            value = entity.attrs.get(slot.name)
            if value is None:
                continue
            unknown = value.kind == "unknown"
            if value.kind == "known" and _UNKNOWN_WORD.search(value.text):
                unknown = True
            if value.kind == "known_list" and any(_UNKNOWN_WORD.search(i) for i in value.items):
                unknown = True
            if unknown:
                gaps.append(
                    GapDescriptor(
                        kind="unknown-attribute",
                        rendered=f"{entity.type_name} '{entity.key}': attribute '{slot.name}' is Unknown",
                        entity_key=entity.key,
                        slot=slot.name,
                    )
                )
                continue
            for ref in value_reference(slot, value):
                ref_type = slot.ref_type
                if doc.get_entity(ref_type, ref) is None:
                    dedupe = (ref_type.lower(), ref.lower())
                    if dedupe not in missing_seen:
                        missing_seen.add(dedupe)
                        missing.append((ref_type, ref))

    for ref_type, ref in missing:
        gaps.append(
            GapDescriptor(
                kind="missing-entity",
                rendered=f"{ref_type} '{ref}' is referenced but not documented",
                entity_key=ref,
            )
        )
    return gaps


def _norm(s: str) -> str:
    return " ".join(s.lower().split())


def _rule_matches(doc_rule: ActionRule, truth_rule) -> bool:
    """Containment check: the doc rule is consistent with a truth rule."""
    action, requirements, key_effect = truth_rule
    head = _norm(action).split()[0]
    if not _norm(doc_rule.action).startswith(head):
        return False

    def overlaps(truth_text: str, doc_text: str) -> bool:
        words = [w for w in re.findall(r"[a-z]{4,}", _norm(truth_text))]
        if not words:
            return True
        doc_norm = _norm(doc_text)
        return any(w in doc_norm for w in words)

    return overlaps(requirements, doc_rule.requirements) and overlaps(
        key_effect, doc_rule.key_result
    )


def coverage_against(doc: Document, truth) -> CoverageReport:
    """Measure the document against generator ground truth.

    `truth` carries `locations` (set of names), `objects` (set of
    (object, location) pairs) and `rules` (list of (action pattern,
    requirements, key effect) triples). Matching is case-insensitive.
    """
    entity_keys = {_norm(e.key) for e in doc.entities.values()}
    list_items = {
        _norm(item)
        for e in doc.entities.values()
        for v in e.attrs.values()
        if v.kind == "known_list"
        for item in v.items
    }

    locations_found = sum(1 for loc in truth.locations if _norm(loc) in entity_keys)
    objects_found = sum(
        1
        for obj, _loc in truth.objects
        if _norm(obj) in list_items or _norm(obj) in entity_keys
    )
    rules_valid = sum(
        1
        for truth_rule in truth.rules
        if any(_rule_matches(r, truth_rule) for r in doc.action_rules)
    )
    # unknown_count is schema-dependent; callers fill it in from list_gaps.
    return CoverageReport(
        locations_found=locations_found,
        locations_total=len(truth.locations),
        objects_found=objects_found,
        objects_total=len(truth.objects),
        rules_valid=rules_valid,
        rules_total=len(truth.rules),
        unknown_count=0,
    )
