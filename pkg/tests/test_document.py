import random
from types import SimpleNamespace

import pytest

from ilcl.document import (
    NOTHING,
    UNKNOWN,
    ActionRule,
    Document,
    Entity,
    Known,
    KnownList,
    coverage_against,
    list_gaps,
    parse_document,
    render_document,
    validate_document,
    value_reference,
)
from ilcl.errors import DocumentParseError
from ilcl.schema import parse_schema

ROOM_SCHEMA = parse_schema(
    """\
#### Observations
- [location]:
  - objects: [object], [object], ... / Unknown / Nothing
  - west: [anything] to [location] / Unknown / Nothing
  - east: [anything] to [location] / Unknown / Nothing
  - north: [anything] to [location] / Unknown / Nothing
  - south: [anything] to [location] / Unknown / Nothing

#### Action Rules
- action: [action_name]
  - requirements: [conditions that must be met]
  - key_result: [expected outcome]
  - note: [additional remarks]
"""
)

CRAFTER_SCHEMA = parse_schema(
    """\
#### Observations
- Position [x, y]: can see [object], [object], ... / Nothing

#### Action Rules
- action: [action_name]
  - requirements: [conditions that must be met]
  - key_result: [expected outcome]
  - note: [additional remarks]
"""
)

CORRIDOR_UNKNOWN = """\
#### Observations

- Corridor:
  - objects: Nothing
  - west: entranceway (without door) to Kitchen
  - east: exit (without door) to Unknown
  - north: closed sliding patio door to Unknown
  - south: entranceway (without door) to Bedroom

#### Action Rules
"""

RESOLVED_DOC = """\
#### Observations

- Corridor:
  - objects: Nothing
  - west: entranceway (without door) to Kitchen
  - east: exit (without door) to Bathroom
  - north: closed sliding patio door to Backyard
  - south: entranceway (without door) to Bedroom

- Bathroom:
  - objects: empty toilet
  - west: exit (without door) to Corridor
  - east: None
  - north: None
  - south: None

- Backyard:
  - objects: patio chair, patio table, BBQ
  - west: None
  - east: closed wooden door to Unknown
  - north: entranceway (without door) to Unknown
  - south: open sliding patio door to Corridor

#### Action Rules
"""


def test_corridor_round_trips_byte_exact():
    doc = parse_document(CORRIDOR_UNKNOWN, ROOM_SCHEMA)
    corridor = doc.get_entity("location", "Corridor")
    assert corridor.attrs["objects"] == NOTHING
    assert corridor.attrs["east"] == Known("exit (without door) to Unknown")
    assert render_document(doc, ROOM_SCHEMA) == CORRIDOR_UNKNOWN


def test_none_is_an_alias_for_nothing():
    doc = parse_document(RESOLVED_DOC, ROOM_SCHEMA)
    bathroom = doc.get_entity("location", "Bathroom")
    assert bathroom.attrs["east"] == NOTHING
    backyard = doc.get_entity("location", "Backyard")
    assert backyard.attrs["objects"] == KnownList(["patio chair", "patio table", "BBQ"])
    # canonical form spells the empty value Nothing
    assert render_document(doc, ROOM_SCHEMA) == RESOLVED_DOC.replace(": None", ": Nothing")


def test_gap_listing_order_and_kinds():
    doc = parse_document(RESOLVED_DOC, ROOM_SCHEMA)
    gaps = list_gaps(doc, ROOM_SCHEMA)
    assert [g.rendered for g in gaps] == [
        "location 'Backyard': attribute 'east' is Unknown",
        "location 'Backyard': attribute 'north' is Unknown",
        "location 'Kitchen' is referenced but not documented",
        "location 'Bedroom' is referenced but not documented",
    ]


def test_unknown_word_inside_known_text_is_a_gap():
    doc = parse_document(CORRIDOR_UNKNOWN, ROOM_SCHEMA)
    gaps = [g for g in list_gaps(doc, ROOM_SCHEMA) if g.kind == "unknown-attribute"]
    assert {(g.entity_key, g.slot) for g in gaps} == {("Corridor", "east"), ("Corridor", "north")}


def test_missing_slot_violation_message():
    broken = CORRIDOR_UNKNOWN.replace("  - south: entranceway (without door) to Bedroom\n", "")
    with pytest.raises(DocumentParseError) as exc:
        parse_document(broken, ROOM_SCHEMA)
    assert any(
        "missing slot 'south' for entity 'Corridor'" in str(v) for v in exc.value.violations
    )


def test_unknown_slot_and_type_violations():
    with pytest.raises(DocumentParseError) as exc:
        parse_document(
            "#### Observations\n\n- Corridor:\n  - objects: Nothing\n  - up: attic\n"
            "  - west: a to B\n  - east: a to B\n  - north: a to B\n  - south: a to B\n",
            ROOM_SCHEMA,
        )
    assert any("unknown slot 'up'" in str(v) for v in exc.value.violations)

    with pytest.raises(DocumentParseError) as exc:
        parse_document("#### Observations\n\n- Corridor\n", ROOM_SCHEMA)
    assert any("unknown entity type" in str(v) for v in exc.value.violations)


def test_duplicate_entity_violation():
    text = CORRIDOR_UNKNOWN.replace(
        "#### Action Rules\n",
        "- Corridor:\n  - objects: Nothing\n  - west: Nothing\n  - east: Nothing\n"
        "  - north: Nothing\n  - south: Nothing\n\n#### Action Rules\n",
    )
    with pytest.raises(DocumentParseError) as exc:
        parse_document(text, ROOM_SCHEMA)
    assert any("duplicate entity 'Corridor'" in str(v) for v in exc.value.violations)


def test_enumerated_domain_enforced():
    schema = parse_schema("#### Observations\n- [door]:\n  - state: open / closed / Unknown\n")
    with pytest.raises(DocumentParseError) as exc:
        parse_document("#### Observations\n\n- front door:\n  - state: ajar\n", schema)
    assert any("not one of" in str(v) for v in exc.value.violations)
    doc = parse_document("#### Observations\n\n- front door:\n  - state: closed\n", schema)
    assert doc.get_entity("door", "front door").attrs["state"] == Known("closed")


def test_invalid_document_never_renders():
    doc = Document()
    doc.add_entity(Entity("location", "Void", {"objects": NOTHING}))
    with pytest.raises(DocumentParseError):
        render_document(doc, ROOM_SCHEMA)


CRAFTER_DOC = """\
#### Observations

- Position [42, 36]: can see
- Position [42, 39]: can see cow, grass
- Position [44, 35]: can see tree

#### Action Rules

- action: Do
  - requirements:
    - The front adjacent cell is an interactable object (grass, tree, stone) or a mob.
    - If the object is stone, the agent must have a pickaxe (wood_pickaxe, stone_pickaxe, or iron_pickaxe) in inventory.
  - key_result:
    - Collects resources from the front adjacent natural objects (sapling from grass, wood from tree, stone from stone). Tree/stone are removed. Grass remains.
    - Attacks the front adjacent mob, dealing damage. If killed after sufficient attacks, mob is removed and provides status benefits (e.g., killing a cow restores food).
  - note: Weapons optional for attacking. Mobs cause passive damage when nearby (e.g., zombies reduce health). Killing requires consecutive attacks (e.g., cow needs 3 hits). Combat may cause health loss near hostile mobs even without attacking. Collecting resources from grass may require multiple attempts.

- action: Place Plant
  - requirements:
      - Agent has at least one sapling in inventory
      - The adjacent cell in the front direction is grass
  - key_result: Places a plant at the front adjacent cell (replacing terrain), consuming one sapling
  - note: Similar to Place Table/Stone; requires front adjacent grass
"""


def test_crafter_document_parses_and_canonicalizes():
    doc = parse_document(CRAFTER_DOC, CRAFTER_SCHEMA)
    empty = doc.get_entity("Position", "42, 36")
    assert empty.attrs["can see"] == NOTHING
    cow = doc.get_entity("Position", "42, 39")
    assert cow.attrs["can see"] == KnownList(["cow", "grass"])
    do = doc.action_rules[0]
    assert do.action == "Do"
    assert do.requirements.startswith("- The front adjacent cell")
    assert "\n" in do.requirements and "\n" in do.key_result
    plant = doc.action_rules[1]
    assert plant.requirements.split("\n") == [
        "- Agent has at least one sapling in inventory",
        "- The adjacent cell in the front direction is grass",
    ]

    canonical = render_document(doc, CRAFTER_SCHEMA)
    assert "can see Nothing" in canonical
    assert parse_document(canonical, CRAFTER_SCHEMA) == doc
    assert render_document(parse_document(canonical, CRAFTER_SCHEMA), CRAFTER_SCHEMA) == canonical


def test_duplicate_action_rule_rejected():
    doc = Document()
    doc.action_rules.append(ActionRule("go", "none", "moves", ""))
    doc.action_rules.append(ActionRule("go", "none", "moves", ""))
    assert any(v.code == "duplicate" for v in validate_document(doc, ROOM_SCHEMA))


def test_value_reference_extraction():
    west = ROOM_SCHEMA.entity_type("location").slot("west")
    assert value_reference(west, Known("entranceway (without door) to Kitchen")) == ["Kitchen"]
    assert value_reference(west, Known("closed sliding patio door to Backyard")) == ["Backyard"]
    assert value_reference(west, Known("exit (without door) to Unknown")) == []
    assert value_reference(west, NOTHING) == []


DIRS = ["west", "east", "north", "south"]
WORDS = ["sofa", "bed", "knife", "apple", "stove", "toilet", "shelf", "cookbook"]
ROOMS = ["Kitchen", "Corridor", "Bedroom", "Backyard", "Pantry", "Driveway", "Street"]


def random_document(rng: random.Random) -> Document:
    doc = Document()
    for room in rng.sample(ROOMS, rng.randint(1, len(ROOMS))):
        attrs = {}
        pick = rng.random()
        if pick < 0.2:
            attrs["objects"] = NOTHING
        elif pick < 0.3:
            attrs["objects"] = UNKNOWN
        else:
            attrs["objects"] = KnownList(rng.sample(WORDS, rng.randint(1, 3)))
        for d in DIRS:
            roll = rng.random()
            if roll < 0.3:
                attrs[d] = NOTHING
            elif roll < 0.4:
                attrs[d] = UNKNOWN
            elif roll < 0.5:
                attrs[d] = Known("exit (without door) to Unknown")
            else:
                attrs[d] = Known(f"exit (without door) to {rng.choice(ROOMS)}")
        doc.add_entity(Entity("location", room, attrs))
    for i in range(rng.randint(0, 3)):
        doc.action_rules.append(
            ActionRule(
                action=f"action {i}",
                requirements=rng.choice(["none", "- a\n- b"]),
                key_result="it works",
                note=rng.choice(["", "be careful"]),
            )
        )
    return doc


def test_seeded_round_trip_fuzz():
    rng = random.Random(7)
    for _ in range(200):
        doc = random_document(rng)
        text = render_document(doc, ROOM_SCHEMA)
        again = parse_document(text, ROOM_SCHEMA)
        assert again == doc
        assert render_document(again, ROOM_SCHEMA) == text


def test_gap_count_decreases_as_holes_resolve():
    doc = parse_document(RESOLVED_DOC, ROOM_SCHEMA)
    count = len([g for g in list_gaps(doc, ROOM_SCHEMA) if g.kind == "unknown-attribute"])
    backyard = doc.get_entity("location", "Backyard")
    backyard.attrs["east"] = Known("closed wooden door to Street")
    now = len([g for g in list_gaps(doc, ROOM_SCHEMA) if g.kind == "unknown-attribute"])
    assert now == count - 1


def test_coverage_against_truth():
    doc = parse_document(RESOLVED_DOC, ROOM_SCHEMA)
    doc.action_rules.append(
        ActionRule(
            "open [door]",
            "the door is closed and you are in the room",
            "the door opens",
            "",
        )
    )
    truth = SimpleNamespace(
        locations={"Corridor", "Bathroom", "Backyard", "Kitchen"},
        objects={("patio chair", "Backyard"), ("BBQ", "Backyard"), ("knife", "Kitchen")},
        rules=[
            ("open [door]", "door is closed", "door opens"),
            ("eat meal", "meal in inventory", "you win"),
        ],
    )
    report = coverage_against(doc, truth)
    assert report.locations_found == 3 and report.locations_total == 4
    assert report.objects_found == 2 and report.objects_total == 3
    assert report.rules_valid == 1 and report.rules_total == 2
    assert report.locations_fraction == 0.75
    empty = coverage_against(Document(), SimpleNamespace(locations=set(), objects=set(), rules=[]))
    assert empty.locations_fraction == 1.0
