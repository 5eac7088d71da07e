"""A three-room toy world for exercising the server end to end."""

from __future__ import annotations

from .adapters import wrap_textworld_like

ROOMS = ("porch", "hallway", "garden")
DESCRIPTIONS = {
    "porch": "A creaky porch. The hallway lies to the east.",
    "hallway": "A narrow hallway. Doors lead east and west.",
    "garden": "An overgrown garden, bright even at dusk.",
}
LAMP_ROOM = "hallway"
GOAL_ROOM = "garden"


class ToyRooms:
    """Deterministic TextWorld-style world: find the lamp, carry it east.

    Speaks the tuple convention (``reset() -> (text, infos)``,
    ``step -> (text, score, done, infos)``) so it doubles as a fixture
    for the adapter. Copyable, so deepcopy snapshots work on it.
    """

    name = "toyrooms"
    background = "A tiny house with three rooms and one lamp."
    copyable = True
    deterministic = True

    def __init__(self):
        self.room = 0
        self.carrying = False
        self.score = 0
        self.done = False

    def reset(self):
        self.room, self.carrying, self.score, self.done = 0, False, 0, False
        return self._look(), {}

    def step(self, action: str):
        if self.done:
            raise RuntimeError("episode finished; reset to play again")
        text = self._apply(action.strip().lower())
        if ROOMS[self.room] == GOAL_ROOM and self.carrying:
            self.done = True
            self.score += 1
            text += " The lamp lights the garden. You win!"
        return text, self.score, self.done, {}

    def _apply(self, action: str) -> str:
        if action == "look":
            return self._look()
        if action == "inventory":
            return "You carry a lamp." if self.carrying else "You carry nothing."
        if action == "go east":
            if self.room + 1 < len(ROOMS):
                self.room += 1
                return self._look()
            return "You can't go that way."
        if action == "go west":
            if self.room > 0:
                self.room -= 1
                return self._look()
            return "You can't go that way."
        if action == "take lamp":
            if ROOMS[self.room] == LAMP_ROOM and not self.carrying:
                self.carrying = True
                self.score += 1
                return "You take the brass lamp."
            return "There is no lamp here."
        return "That doesn't work here."

    def _look(self) -> str:
        text = DESCRIPTIONS[ROOMS[self.room]]
        if ROOMS[self.room] == LAMP_ROOM and not self.carrying:
            text += " A brass lamp sits on a shelf."
        return text


def toy_factory():
    """A fresh adapter-wrapped ToyRooms per session."""
    return wrap_textworld_like(ToyRooms())()
