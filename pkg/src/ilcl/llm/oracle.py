"""A scripted provider that plays the exploration loop well, offline.

Every reply is computed from the rendered prompt bindings alone: the
document, the forest, and trajectory text a real model would see. It
never touches generator ground truth. Tests use it to drive complete
runs deterministically; repeated calls with the same bindings produce
byte-identical replies.

Its document language for room exits is a small canonical grammar:

    exit (without door) to <room|Unknown>
    a closed <door name> to <room|Unknown>
    an open <door name> to <room|Unknown>

A destination stays Unknown until a trajectory shows what lies behind,
which keeps the frontier alive for the planner.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from ..document import Document, list_gaps, parse_document, render_document
from ..envs.base import Observation
from ..explore.actor import rule_key_result
from ..explore.extractor import mechanical_apply
from ..explore.types import Edit
from ..forest import Forest, parse_forest
from ..schema import Schema
from .providers import CompletionRequest, Provider

DIRECTIONS = ("west", "east", "north", "south")
REVERSE = {"north": "south", "south": "north", "east": "west", "west": "east"}

_BANNER = re.compile(r"-= (.+?) =-")
_DOORLESS = re.compile(r"There is an exit to the (north|south|east|west) without a door\.")
_DOORED = re.compile(r"There is an? (open|closed) (.+? door) leading (north|south|east|west)\.")
_FLOOR = re.compile(r"There (?:is|are) (.+?) on the floor\.")
_FIXTURES = re.compile(r"You make out (.+?) here\.")
_GO = re.compile(r"^go (north|south|east|west)$")
_SUMMARY_LOC = re.compile(r"Agent's location: ([^.]+)\.")
_SHORT_LOC = re.compile(r"^in (.+?)\.")
_CLOSED_DOOR_PHRASE = re.compile(r"^a closed (.+? door) to ")
_DANGLING_DOOR = re.compile(r"^(?:a closed|an open) (.+? door) to Unknown$")


def _norm(s: str) -> str:
    return " ".join(s.lower().split())


def _strip_article(item: str) -> str:
    return re.sub(r"^(?:a|an|the) ", "", item.strip())


def _split_listing(text: str) -> list[str]:
    items: list[str] = []
    for part in text.split(", "):
        items.extend(part.split(" and "))
    return [_strip_article(i) for i in items if i.strip()]


@dataclass
class RoomInfo:
    """One room observation: what it holds and where its exits point."""

    name: str
    objects: list[str] = field(default_factory=list)
    exits: dict[str, tuple[str | None, str | None]] = field(default_factory=dict)
    resolved: dict[str, str] = field(default_factory=dict)  # direction -> room


def parse_room_text(text: str) -> RoomInfo | None:
    banner = _BANNER.search(text)
    if banner is None:
        return None
    info = RoomInfo(name=banner.group(1))
    m = _FIXTURES.search(text)
    if m:
        info.objects.extend(_split_listing(m.group(1)))
    m = _FLOOR.search(text)
    if m:
        info.objects.extend(_split_listing(m.group(1)))
    for direction in _DOORLESS.findall(text):
        info.exits[direction] = (None, None)
    for state, door, direction in _DOORED.findall(text):
        info.exits[direction] = (state, door)
    return info


def _exit_phrase(door_state: str | None, door: str | None, dest: str) -> str:
    if door is None:
        return f"exit (without door) to {dest}"
    article = "an open" if door_state == "open" else "a closed"
    return f"{article} {door} to {dest}"


def location_of(summary: str) -> str | None:
    m = _SUMMARY_LOC.search(summary) or _SHORT_LOC.match(summary.strip())
    return m.group(1) if m else None


@dataclass
class ParsedTrajectory:
    start_summary: str = ""
    replayed: list[str] = field(default_factory=list)
    events: list[tuple[str, str]] = field(default_factory=list)
    omitted: bool = False


def parse_trajectory_text(text: str) -> ParsedTrajectory:
    out = ParsedTrajectory()
    action: str | None = None
    obs_lines: list[str] | None = None

    def flush():
        nonlocal action, obs_lines
        if action is not None and obs_lines is not None:
            out.events.append((action, "\n".join(obs_lines)))
        action, obs_lines = None, None

    for line in text.splitlines():
        if line.startswith("[State] "):
            _name, _sep, summary = line[len("[State] "):].partition(": ")
            out.start_summary = summary
        elif line.startswith("[Replayed Action] "):
            flush()
            out.replayed.append(line[len("[Replayed Action] "):])
        elif line.startswith("[Thought] "):
            flush()
        elif line.startswith("[Action] "):
            flush()
            action = line[len("[Action] "):]
        elif line.startswith("[Observation] "):
            obs_lines = [line[len("[Observation] "):]]
        elif re.fullmatch(r"\(\d+ earlier actions omitted\)", line):
            flush()
            out.omitted = True
        elif obs_lines is not None:
            obs_lines.append(line)
    flush()
    return out


class OracleProvider(Provider):
    """Answers every template from what the prompt shows, deterministically."""

    def __init__(self, schema: Schema):
        self.schema = schema

    def complete(self, request: CompletionRequest) -> str:
        handler = getattr(self, "_" + request.template_id, None)
        if handler is None:
            raise NotImplementedError(f"no oracle reply for {request.template_id}")
        return handler(dict(request.bindings or {}))

    # -- shared parsing ---------------------------------------------------

    def _doc(self, bindings) -> Document:
        return parse_document(bindings["knowledge"], self.schema)

    def _forest(self, bindings) -> Forest:
        return parse_forest(bindings["todo_forest"])

    def _location_spec(self):
        return self.schema.entity_types[0]

    @staticmethod
    def _states_by_location(forest: Forest) -> dict[str, str]:
        table: dict[str, str] = {}
        for name, state in forest.states.items():
            loc = location_of(state.summary)
            if loc and _norm(loc) not in table:
                table[_norm(loc)] = name
        return table

    @staticmethod
    def _path_exists(forest: Forest, state_name: str, steps: list[str]) -> bool:
        cursor = forest.state(state_name)
        if cursor is None:
            return False
        for label in steps:
            cursor = cursor.child(label)
            if cursor is None:
                return False
        return True

    @staticmethod
    def _probe_steps(phrase: str, direction: str) -> list[str]:
        m = _CLOSED_DOOR_PHRASE.match(phrase)
        if m:
            return [f"open {m.group(1)}", f"go {direction}"]
        return [f"go {direction}"]

    # -- planner templates --------------------------------------------------

    def _planner_obs_todo(self, b) -> str:
        doc = self._doc(b)
        forest = self._forest(b)
        todo = self._next_probe(doc, forest)
        thought = (
            "I picked the first unexplored exit that a known state can reach."
            if todo
            else "Every exit I can currently reach has been probed or queued."
        )
        return f"<thought>{thought}</thought>\n<todo>{todo or 'None'}</todo>"

    def _next_probe(self, doc: Document, forest: Forest) -> str | None:
        if not doc.entities:
            if self._path_exists(forest, "init_state", ["look"]):
                return None
            return "init_state -> look"
        spec = self._location_spec()
        states = self._states_by_location(forest)
        for gap in list_gaps(doc, self.schema):
            state = steps = None
            if gap.kind == "unknown-attribute" and gap.slot in DIRECTIONS:
                entity = doc.get_entity(spec.name, gap.entity_key)
                value = entity.attrs.get(gap.slot) if entity else None
                if value is None or value.kind != "known":
                    continue
                state = states.get(_norm(gap.entity_key))
                steps = self._probe_steps(value.text, gap.slot)
            elif gap.kind == "missing-entity":
                state, steps = self._route_to_reference(doc, states, gap.entity_key)
            if state and steps and not self._path_exists(forest, state, steps):
                return " -> ".join([state, *steps])
        return None

    def _route_to_reference(self, doc, states, ref_key):
        spec = self._location_spec()
        for entity in doc.entities.values():
            for slot in spec.slots:
                if slot.name not in DIRECTIONS:
                    continue
                value = entity.attrs.get(slot.name)
                if value is None or value.kind != "known":
                    continue
                if not value.text.endswith(f"to {ref_key}"):
                    continue
                state = states.get(_norm(entity.key))
                if state:
                    return state, self._probe_steps(value.text, slot.name)
        return None, None

    def _planner_rule_todo(self, b) -> str:
        return (
            "<thought>The executed trajectories already show how actions behave; "
            "no extra paths are needed.</thought>\n```json\n[]\n```"
        )

    def _planner_promote(self, b) -> str:
        forest = self._forest(b)
        taken_locations = {
            _norm(loc)
            for state in forest.states.values()
            if (loc := location_of(state.summary))
        }
        candidate = None

        def walk(state_name, node, trail):
            nonlocal candidate
            trail = trail + (node.label,)
            if candidate is None and node.status == "done" and node.promoted_to is None:
                m = _SUMMARY_LOC.search(node.key_result)
                if m and _norm(m.group(1)) not in taken_locations:
                    candidate = (state_name, trail, m.group(1))
            for child in node.children:
                walk(state_name, child, trail)

        for state in forest.states.values():
            for child in state.children:
                walk(state.name, child, ())

        if candidate is None:
            payload = {
                "target_missing_observation": "None",
                "selected_path": "None",
                "new_state_name": "None",
                "state_summary": "None",
            }
        else:
            state_name, trail, room = candidate
            name = "in_" + re.sub(r"\W+", "_", room.lower()).strip("_")
            while name in forest.states:
                name += "_2"
            payload = {
                "target_missing_observation": f"what lies beyond {room}",
                "selected_path": " -> ".join([state_name, *trail]),
                "new_state_name": name,
                "state_summary": f"in {room}.",
            }
        return "```json\n" + json.dumps(payload, indent=1) + "\n```"

    def _planner_loop_control(self, b) -> str:
        doc = self._doc(b)
        forest = self._forest(b)

        def has_todo(node) -> bool:
            return node.status == "todo" or any(has_todo(c) for c in node.children)

        open_work = any(
            has_todo(child) for state in forest.states.values() for child in state.children
        )
        go_on = open_work or bool(list_gaps(doc, self.schema))
        return f"<decision>{'Continue' if go_on else 'Stop'}</decision>"

    def _actor_subagent(self, b) -> str:
        return "<thought>Nothing useful is left to try.</thought>\n<action>stop</action>"

    # -- extractor templates ------------------------------------------------

    def _extractor_obs_edits(self, b) -> str:
        doc = self._doc(b)
        return _numbered(self._obs_modifications(doc, b["trajectory"]))

    def _extractor_rule_edits(self, b) -> str:
        doc = self._doc(b)
        return _numbered(self._rule_modifications(doc, b["trajectory"]))

    def _extractor_check(self, b) -> str:
        doc = self._doc(b)
        canonical = {
            _norm(m)
            for m in self._obs_modifications(doc, b["trajectory"])
            + self._rule_modifications(doc, b["trajectory"])
        }
        verdict = "Accept" if _norm(b["modification"]) in canonical else "Reject"
        return f"<decision>{verdict}</decision>"

    def _extractor_apply(self, b) -> str:
        doc = parse_document(b["knowledge"], self.schema)
        bodies = split_modification_list(b["modification_list"])
        edits = [
            Edit(id=f"apply/{i}", section="observations", body=body)
            for i, body in enumerate(bodies)
        ]
        new_doc = mechanical_apply(doc, self.schema, edits)
        text = render_document(new_doc, self.schema)
        return (
            f"<thought>Applied {len(bodies)} modifications mechanically.</thought>\n"
            f"<knowledge>\n{text}\n</knowledge>"
        )

    def _keyresult_summarize(self, b) -> str:
        events = parse_trajectory_text(b["observation"]).events
        if events:
            action, obs_text = events[-1]
        else:
            action, obs_text = b.get("action", ""), str(b["observation"])
        summary = rule_key_result(action, Observation(obs_text))
        limit = int(b["max_chars"])
        if len(summary) > limit:
            summary = summary[: limit - 3].rstrip() + "..."
        return f"<key_result>{summary}</key_result>"

    # -- document edit derivation --------------------------------------------

    def _obs_modifications(self, doc: Document, trajectory: str) -> list[str]:
        spec = self._location_spec()
        parsed = parse_trajectory_text(trajectory)
        current = None if parsed.omitted else location_of(parsed.start_summary)
        for label in parsed.replayed:
            if _GO.match(label):
                current = None

        adds: dict[str, RoomInfo] = {}
        resolutions: dict[tuple[str, str], str] = {}

        def resolve(room: str, direction: str, dest: str) -> None:
            resolutions.setdefault((_norm(room), direction), dest)

        for action, obs in parsed.events:
            info = parse_room_text(obs)
            if info is None:
                continue
            move = _GO.match(action)
            if move and current:
                direction = move.group(1)
                resolve(current, direction, info.name)
                back = REVERSE[direction]
                if back in info.exits:
                    resolve(info.name, back, current)
            if doc.get_entity(spec.name, info.name) is None and info.name not in adds:
                adds[info.name] = info
            current = info.name

        self._match_doors(doc, adds, resolve)

        mods: list[str] = []
        for info in adds.values():
            parts = [f"Add location {info.name}"]
            objects = ", ".join(info.objects) if info.objects else "Nothing"
            parts.append(f"objects: {objects}")
            for slot in spec.slots:
                if slot.name not in DIRECTIONS:
                    continue
                if slot.name not in info.exits:
                    parts.append(f"{slot.name}: Nothing")
                    continue
                door_state, door = info.exits[slot.name]
                dest = resolutions.get((_norm(info.name), slot.name), "Unknown")
                parts.append(f"{slot.name}: {_exit_phrase(door_state, door, dest)}")
            mods.append(" | ".join(parts))

        for entity in doc.entities.values():
            for slot in spec.slots:
                if slot.name not in DIRECTIONS:
                    continue
                dest = resolutions.get((_norm(entity.key), slot.name))
                if dest is None:
                    continue
                value = entity.attrs.get(slot.name)
                if value is None or value.kind != "known" or "Unknown" not in value.text:
                    continue
                phrase = value.text.replace("to Unknown", f"to {dest}")
                mods.append(f"Update location {entity.key} | {slot.name}: {phrase}")
        return mods

    def _match_doors(self, doc: Document, adds: dict, resolve) -> None:
        """Doors are unique, so a name seen from both sides links two rooms."""
        spec = self._location_spec()
        doors: dict[str, list[tuple[str, str]]] = {}
        for entity in doc.entities.values():
            for slot in spec.slots:
                value = entity.attrs.get(slot.name)
                if value is None or value.kind != "known":
                    continue
                m = _DANGLING_DOOR.match(value.text)
                if m:
                    doors.setdefault(m.group(1), []).append((entity.key, slot.name))
        for info in adds.values():
            for direction, (_state, door) in info.exits.items():
                if door:
                    doors.setdefault(door, []).append((info.name, direction))
        for sides in doors.values():
            rooms: list[tuple[str, str]] = []
            for room, direction in sides:
                if all(_norm(room) != _norm(seen) for seen, _ in rooms):
                    rooms.append((room, direction))
            if len(rooms) != 2:
                continue
            (room_a, dir_a), (room_b, dir_b) = rooms
            resolve(room_a, dir_a, room_b)
            resolve(room_b, dir_b, room_a)

    GO_RULE = (
        "Add rule | action: go <direction> | requirements: an exit in that direction "
        "is present and any door in it stands open | key_result: the player moves "
        "into the adjacent room | note: None"
    )
    OPEN_RULE = (
        "Add rule | action: open <door> | requirements: a closed door is visible "
        "in the current room | key_result: the door opens and the way through "
        "becomes passable | note: None"
    )

    def _rule_modifications(self, doc: Document, trajectory: str) -> list[str]:
        parsed = parse_trajectory_text(trajectory)
        saw_go = any(
            _GO.match(a) and _BANNER.search(obs) for a, obs in parsed.events
        )
        saw_open = any(
            a.startswith("open ") and obs.startswith("You open") for a, obs in parsed.events
        )
        existing = {rule.action for rule in doc.action_rules}
        mods = []
        if saw_go and "go <direction>" not in existing:
            mods.append(self.GO_RULE)
        if saw_open and "open <door>" not in existing:
            mods.append(self.OPEN_RULE)
        return mods


def _numbered(mods: list[str]) -> str:
    if not mods:
        return "<modification1>\nNone\n</modification1>"
    return "\n".join(
        f"<modification{i}>\n{m}\n</modification{i}>" for i, m in enumerate(mods, 1)
    )


_MOD_HEADER = re.compile(r"(?m)^Modification \d+:\s*\n")


def split_modification_list(text: str) -> list[str]:
    parts = _MOD_HEADER.split(text)
    return [p.strip() for p in parts if p.strip()]
