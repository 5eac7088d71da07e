"""RoomWorld: a deterministic TextWorld-style house of rooms and doors.

A seeded generator lays rooms out on a grid, connects adjacent ones
(some behind named, initially closed doors), scatters portable objects
on floors, and optionally installs a cookbook recipe: gather
ingredients, process them with a knife, cook each with the right tool
(BBQ grills, stove fries, oven roasts), then "prepare meal" and
"eat meal" in the Kitchen to win.

Observations imitate the TextWorld surface: a "-= Room =-" banner,
flavor text, fixtures, floor objects, and one exit sentence per
direction. Failed actions return explicit failure text (or the bare
"Nothing happens." in alfworld failure style). Nothing here is ever
random at runtime; all randomness happens in the generator.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import random
from dataclasses import dataclass, field

from ..errors import EnvError
from .base import (
    EnvCapabilities,
    Environment,
    GroundTruth,
    Observation,
    TaskSpec,
    require_not_terminal,
)

DIRECTIONS = ("north", "east", "south", "west")
_DELTA = {"north": (0, -1), "east": (1, 0), "south": (0, 1), "west": (-1, 0)}
_OPPOSITE = {"north": "south", "south": "north", "east": "west", "west": "east"}

ROOM_NAMES = (
    "Kitchen", "Corridor", "Bedroom", "Bathroom", "Backyard", "Pantry",
    "Driveway", "Street", "Supermarket", "Garden", "Cellar", "Attic",
    "Office", "Workshop", "Balcony", "Laundry",
)

ROOM_FLAVOR = {
    "Livingroom": "A comfy kind of place.",
    "Kitchen": "A normal kind of place.",
    "Corridor": "An ordinary one.",
    "Bedroom": "A restful little room.",
    "Bathroom": "Spotless, more or less.",
    "Backyard": "Fresh air at last.",
    "Pantry": "It smells of flour.",
    "Driveway": "Gravel crunches underfoot.",
    "Street": "Quiet at this hour.",
    "Supermarket": "The shelves are mostly bare.",
    "Garden": "Someone has been weeding.",
    "Cellar": "Cool and a little damp.",
    "Attic": "Dust hangs in the air.",
    "Office": "Papers everywhere.",
    "Workshop": "Sawdust covers the bench.",
    "Balcony": "A fine view of the yard.",
    "Laundry": "It hums with old pipes.",
}

DOOR_NAMES = (
    "fiberglass door", "frosted-glass door", "sliding patio door",
    "wooden door", "sliding door", "screen door", "barn door",
    "plain door", "metal door", "glass door", "oak door", "pine door",
    "steel door", "brass door", "iron door", "birch door",
)

OBJECT_NAMES = (
    "old key", "brass lantern", "dusty book", "tin can", "wooden spoon",
    "silver coin", "small mirror", "candle", "coil of rope", "hammer",
    "empty bottle", "broom", "folded map", "clay pot", "tea kettle",
    "pocket watch", "garden trowel", "wool blanket", "chess piece",
    "postcard",
)

INGREDIENT_NAMES = (
    "red apple", "raw purple potato", "raw yellow potato",
    "orange bell pepper", "red onion", "white onion", "pork chop",
    "red hot pepper", "block of cheese",
)

PROCESS_VERBS = ("slice", "dice", "chop")
COOK_TOOLS = {"BBQ": ("grill", "grilled"), "stove": ("fry", "fried"), "oven": ("roast", "roasted")}
TOOL_ROOM = {"BBQ": "Backyard", "stove": "Kitchen", "oven": "Kitchen"}

DECOR_FIXTURES = (
    "sofa", "bed", "toilet", "wooden shelf", "showcase", "workbench",
    "coat rack", "bookcase", "armchair", "footstool",
)

SCORE_LINE = "\n\n\nYour score has just gone up by one point."

ACTION_INVENTORY = (
    "look", "inventory", "go <direction>", "examine <thing>",
    "open <door>", "close <door>", "take <object>", "drop <object>",
    "eat <food>", "slice <ingredient> with knife",
    "dice <ingredient> with knife", "chop <ingredient> with knife",
    "cook <ingredient> with <tool>", "prepare meal", "eat meal",
)

BACKGROUND = """\
#### Available Actions

Available actions include but are not limited to:
- look: describe the current room
- look ...:  describe a specific object in the room
- inventory: print player's inventory
- go ...:    move the player north, east, south or west
- examine ...:    examine something more closely
- eat ...:   eat edible food
- open ...:  open a door or a container
- close ...: close a door or a container
- drop ...:  drop an object on the floor
- take ...:  take an object that is on the floor
- put ... on ...: place an object on a supporter
- take ... from ...:   take an object from a container or a supporter
- insert ... into ...: place an object into a container
- lock ... with ...:   lock a door or a container with a key
- unlock ... with ...: unlock a door or a container with a key
- prepare meal:   prepare a meal using ingredients in the inventory. You can only prepare meals in the Kitchen.

#### Tips
- No door is locked. All doors can be opened, even if it appears to be obstructed. For example, "open front door".
- You can examine the cookbook to see the recipe when it is visible.
- The BBQ is for grilling things, the stove is for frying things, and the oven is for roasting things. Cooking ingredients in the wrong way will lead to a failure of the game.
- Once you have processed ingredients and the appropriate cooking tool ready, cook all of them according to the recipe.
- There are two conditions to correctly cook something (grill/fry/roast): a) the ingredient you want to cook is in your inventory and b) there is a suitable cooking tool in the room, and then use `cook ... with ...` command.
- When you need to chop/slice/dice ingredients, you need to take the knife and the ingredient in your inventory and then `slice/chop/dice ... with knife`
- Make sure to first process the food (chop/slice/dice) before you try to cook it.
- When you have all the ingredients (that got processed or cooked according to the recipe), you can `prepare meal` in the kitchen and then `eat meal` to win the game.
- The ingredients should EXACTLY match the color in the recipe, but if the recipe doesn't specify color, any color would be fine. When you `take ... with ...`, use the EXACT name you see.
- You don't need to examine the container/supporter (e.g. toolbox) when it says something like "there isn't a thing on it"/"has nothing on it"
"""


def _article(phrase: str) -> str:
    return "an" if phrase[:1].lower() in "aeiou" else "a"


def _with_article(phrase: str) -> str:
    return f"{_article(phrase)} {phrase}"


def _display(name: str) -> str:
    return name[4:] if name.startswith("raw ") else name


def _listing(items: list[str]) -> str:
    parts = [_with_article(i) for i in items]
    if len(parts) == 1:
        return parts[0]
    return ", ".join(parts[:-1]) + " and " + parts[-1]


@dataclass(frozen=True)
class Recipe:
    ingredients: tuple[str, ...]
    process: dict  # ingredient -> process verb
    cook: dict  # ingredient -> tool name

    def text(self) -> str:
        lines = [
            'You open the copy of "Cooking: A Modern Approach (3rd Ed.)" and start reading:',
            "",
            "Recipe #1",
            "---------",
            "Gather all following ingredients and follow the directions to prepare this tasty meal.",
            "",
            "Ingredients:",
        ]
        for ing in self.ingredients:
            lines.append(_display(ing))
        lines.append("")
        lines.append("Directions:")
        for ing in self.ingredients:
            lines.append(f"{self.process[ing]} the {_display(ing)}")
            lines.append(f"{COOK_TOOLS[self.cook[ing]][0]} the {_display(ing)}")
        lines.append("prepare meal")
        return "\n".join(lines)


@dataclass(frozen=True)
class WorldSpec:
    seed: int
    start: str
    rooms: tuple[str, ...]
    exits: dict  # room -> {direction: (dest, door-name or "")}
    fixtures: dict  # room -> tuple of fixture names
    floor: dict  # room -> tuple of object names initially on the floor
    recipe: Recipe | None
    failure_style: str = "textworld"

    def doors(self) -> set[str]:
        return {d for exits in self.exits.values() for _, d in exits.values() if d}


def generate(
    seed: int,
    n_rooms: int = 8,
    n_objects: int = 12,
    door_density: float = 0.35,
    with_recipe: bool = True,
    failure_style: str = "textworld",
) -> tuple["RoomWorld", GroundTruth]:
    """Build a seeded world and the ground truth that describes it."""
    if n_rooms < 2:
        raise EnvError("n_rooms must be at least 2")
    if n_rooms > len(ROOM_NAMES) + 1:
        raise EnvError(f"n_rooms must be at most {len(ROOM_NAMES) + 1}")
    if with_recipe and n_rooms < 3:
        raise EnvError("a recipe world needs at least 3 rooms")
    if not 0.0 <= door_density <= 1.0:
        raise EnvError("door_density must be within [0, 1]")
    if failure_style not in ("textworld", "alfworld"):
        raise EnvError(f"unknown failure_style {failure_style!r}")

    rng = random.Random(seed)

    # Lay rooms on a grid by random walk; adjacency becomes exits.
    positions = {(0, 0)}
    order = [(0, 0)]
    while len(positions) < n_rooms:
        x, y = order[rng.randrange(len(order))]
        free = [
            (x + dx, y + dy)
            for dx, dy in _DELTA.values()
            if (x + dx, y + dy) not in positions
        ]
        if not free:
            continue
        spot = free[rng.randrange(len(free))]
        positions.add(spot)
        order.append(spot)

    required = ["Kitchen"] + (["Backyard"] if with_recipe else [])
    others = [n for n in ROOM_NAMES if n not in required]
    rng.shuffle(others)
    rest = required + others[: n_rooms - 1 - len(required)]
    rng.shuffle(rest)
    names = ["Livingroom"] + rest
    room_at = {pos: names[i] for i, pos in enumerate(order)}

    exits: dict[str, dict[str, tuple[str, str]]] = {name: {} for name in names}
    undirected = []
    for pos in order:
        x, y = pos
        for direction, (dx, dy) in _DELTA.items():
            neighbor = (x + dx, y + dy)
            if neighbor in positions:
                edge = tuple(sorted([pos, neighbor]))
                if edge not in undirected:
                    undirected.append(edge)
                exits[room_at[pos]][direction] = (room_at[neighbor], "")

    door_pool = list(DOOR_NAMES)
    rng.shuffle(door_pool)
    for a, b in undirected:
        if door_pool and rng.random() < door_density:
            door = door_pool.pop()
            for pos, other in ((a, b), (b, a)):
                for direction, (dest, _) in exits[room_at[pos]].items():
                    if dest == room_at[other]:
                        exits[room_at[pos]][direction] = (dest, door)

    # Fixtures: cooking tools where they belong, light decor elsewhere.
    fixtures: dict[str, list[str]] = {name: [] for name in names}
    if "Kitchen" in names:
        fixtures["Kitchen"] = ["stove", "oven"]
    if "Backyard" in names:
        fixtures["Backyard"] = ["BBQ"]
    decor = list(DECOR_FIXTURES)
    rng.shuffle(decor)
    for name in names:
        if not fixtures[name] and decor and rng.random() < 0.6:
            fixtures[name] = [decor.pop()]

    # Recipe first, so its props are guaranteed placement.
    floor: dict[str, list[str]] = {name: [] for name in names}
    recipe = None
    placed: list[str] = []
    if with_recipe:
        ingredient_pool = list(INGREDIENT_NAMES)
        rng.shuffle(ingredient_pool)
        chosen = tuple(sorted(ingredient_pool[:2]))
        process = {ing: PROCESS_VERBS[rng.randrange(len(PROCESS_VERBS))] for ing in chosen}
        cook = {ing: ("BBQ", "stove", "oven")[rng.randrange(3)] for ing in chosen}
        recipe = Recipe(ingredients=chosen, process=process, cook=cook)
        floor["Kitchen"].append("cookbook")
        floor["Kitchen"].append("knife")
        placed.extend(["cookbook", "knife"])
        for ing in chosen:
            room = names[rng.randrange(len(names))]
            floor[room].append(ing)
            placed.append(ing)

    if n_objects < len(placed):
        raise EnvError(f"n_objects must be at least {len(placed)} for this configuration")
    extras = list(OBJECT_NAMES)
    rng.shuffle(extras)
    while len(placed) < n_objects:
        if not extras:
            raise EnvError("object pool exhausted; lower n_objects")
        obj = extras.pop()
        room = names[rng.randrange(len(names))]
        floor[room].append(obj)
        placed.append(obj)

    spec = WorldSpec(
        seed=seed,
        start="Livingroom",
        rooms=tuple(names),
        exits={r: dict(sorted(e.items())) for r, e in exits.items()},
        fixtures={r: tuple(f) for r, f in fixtures.items()},
        floor={r: tuple(objs) for r, objs in floor.items()},
        recipe=recipe,
        failure_style=failure_style,
    )
    env = RoomWorld(spec)
    return env, _ground_truth(spec)


class RoomWorld(Environment):
    name = "roomworld"
    schema_id = "roomworld"
    background = BACKGROUND

    def __init__(self, spec: WorldSpec):
        self.spec = spec
        self._snapshots: dict[str, str] = {}
        self._snap_counter = 0
        self._was_reset = False
        self._init_state()

    # -- state ---------------------------------------------------------

    def _init_state(self):
        self.room = self.spec.start
        self.inventory: list[str] = []
        self.open_doors: set[str] = set()
        self.floor = {r: list(objs) for r, objs in self.spec.floor.items()}
        self.processed: dict[str, str] = {}
        self.cooked: dict[str, str] = {}
        self.scored: set[str] = set()
        self.terminal = False
        self.won = False

    def _state_blob(self) -> str:
        return json.dumps(
            {
                "room": self.room,
                "inventory": self.inventory,
                "open_doors": sorted(self.open_doors),
                "floor": self.floor,
                "processed": self.processed,
                "cooked": self.cooked,
                "scored": sorted(self.scored),
                "terminal": self.terminal,
                "won": self.won,
            },
            sort_keys=True,
        )

    def _load_blob(self, blob: str):
        data = json.loads(blob)
        self.room = data["room"]
        self.inventory = list(data["inventory"])
        self.open_doors = set(data["open_doors"])
        self.floor = {r: list(objs) for r, objs in data["floor"].items()}
        self.processed = dict(data["processed"])
        self.cooked = dict(data["cooked"])
        self.scored = set(data["scored"])
        self.terminal = data["terminal"]
        self.won = data["won"]

    # -- protocol ------------------------------------------------------

    def reset(self) -> Observation:
        self._init_state()
        self._was_reset = True
        text = self._room_text(arrive=False)
        if self.spec.recipe:
            banner = (
                "You are hungry! Let's cook a delicious meal. Check the cookbook "
                "in the kitchen for the recipe. Once done, enjoy your meal!"
            )
            text = banner + "\n\n" + text
        return Observation(text)

    def capabilities(self) -> EnvCapabilities:
        return EnvCapabilities(
            snapshot_restore=True,
            deterministic=True,
            action_inventory=ACTION_INVENTORY,
        )

    def snapshot(self) -> str:
        self._snap_counter += 1
        snap_id = f"snap-{self._snap_counter}"
        self._snapshots[snap_id] = self._state_blob()
        return snap_id

    def restore(self, snapshot_id: str) -> None:
        if snapshot_id not in self._snapshots:
            raise EnvError(f"unknown snapshot {snapshot_id!r}")
        self._load_blob(self._snapshots[snapshot_id])

    def fingerprint(self) -> str:
        payload = json.dumps(
            {
                "rooms": self.spec.rooms,
                "start": self.spec.start,
                "exits": self.spec.exits,
                "fixtures": self.spec.fixtures,
                "floor": self.spec.floor,
                "recipe": None
                if not self.spec.recipe
                else {
                    "ingredients": self.spec.recipe.ingredients,
                    "process": self.spec.recipe.process,
                    "cook": self.spec.recipe.cook,
                },
                "failure_style": self.spec.failure_style,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]

    # -- observation text ----------------------------------------------

    def _room_text(self, arrive: bool) -> str:
        room = self.room
        verb = "You arrive in" if arrive else "You are in"
        lines = [
            f"-= {room} =-",
            f"{verb} {_with_article(room.lower())}. {ROOM_FLAVOR.get(room, 'Nothing fancy.')}",
        ]
        fixtures = list(self.spec.fixtures.get(room, ()))
        if fixtures:
            lines.append(f"You make out {_listing(fixtures)} here.")
        objects = self.floor.get(room, [])
        if objects:
            plural = "are" if len(objects) > 1 else "is"
            lines.append(f"There {plural} {_listing(objects)} on the floor.")
        exit_parts = []
        for direction in DIRECTIONS:
            exit_info = self.spec.exits[room].get(direction)
            if not exit_info:
                continue
            _, door = exit_info
            if not door:
                exit_parts.append(f"There is an exit to the {direction} without a door.")
            else:
                state = "open" if door in self.open_doors else "closed"
                exit_parts.append(
                    f"There is {_article(state)} {state} {door} leading {direction}."
                )
        if exit_parts:
            lines.append(" ".join(exit_parts))
        return "\n".join(lines)

    def _fail(self, text: str) -> Observation:
        if self.spec.failure_style == "alfworld":
            return Observation("Nothing happens.")
        return Observation(text)

    def _score(self, text: str, key: str) -> Observation:
        if key not in self.scored:
            self.scored.add(key)
            return Observation(text + SCORE_LINE, score_delta=1)
        return Observation(text)

    # -- helpers -------------------------------------------------------

    def _visible_doors(self) -> dict[str, str]:
        doors = {}
        for _, door in self.spec.exits[self.room].values():
            if door:
                doors[door.lower()] = door
        return doors

    def _find_carried(self, noun: str) -> str | None:
        noun = noun.lower()
        for item in self.inventory:
            if item.lower() == noun or _display(item).lower() == noun:
                return item
        return None

    def _find_on_floor(self, noun: str) -> str | None:
        noun = noun.lower()
        for item in self.floor[self.room]:
            if item.lower() == noun or _display(item).lower() == noun:
                return item
        return None

    def _is_ingredient(self, item: str) -> bool:
        return bool(self.spec.recipe) and item in self.spec.recipe.ingredients

    # -- dynamics ------------------------------------------------------

    def step(self, action: str) -> Observation:
        if not self._was_reset:
            raise EnvError("call reset() before step()")
        require_not_terminal(self.terminal)
        act = " ".join(action.strip().split())
        low = act.lower()

        if low == "look":
            return Observation(self._room_text(arrive=False))
        if low == "inventory":
            if not self.inventory:
                return Observation("You are carrying nothing.")
            return Observation(f"You are carrying: {_listing(self.inventory)}.")
        if low.startswith("go "):
            return self._go(low[3:].strip())
        if low.startswith("open "):
            return self._open(low[5:].strip())
        if low.startswith("close "):
            return self._close(low[6:].strip())
        if low.startswith("take "):
            return self._take(low[5:].strip())
        if low.startswith("drop "):
            return self._drop(low[5:].strip())
        if low.startswith("examine ") or low.startswith("look "):
            noun = low.split(" ", 1)[1].strip()
            return self._examine(noun)
        if low == "prepare meal":
            return self._prepare_meal()
        if low.startswith("eat "):
            return self._eat(low[4:].strip())
        for verb in PROCESS_VERBS:
            if low.startswith(verb + " "):
                return self._process(verb, low[len(verb) + 1 :].strip())
        if low.startswith("cook "):
            return self._cook(low[5:].strip())
        if low.split(" ", 1)[0] in ("put", "insert", "lock", "unlock"):
            return self._fail("You can't do that here.")
        return self._fail("That's not a verb I recognise.")

    def _go(self, direction: str) -> Observation:
        if direction not in DIRECTIONS:
            return self._fail("You can't go that way.")
        exit_info = self.spec.exits[self.room].get(direction)
        if not exit_info:
            return self._fail("You can't go that way.")
        dest, door = exit_info
        if door and door not in self.open_doors:
            return self._fail(f"You have to open the {door} first.")
        self.room = dest
        return Observation(self._room_text(arrive=True))

    def _open(self, noun: str) -> Observation:
        doors = self._visible_doors()
        if noun in doors:
            door = doors[noun]
            if door in self.open_doors:
                return self._fail("That's already open.")
            self.open_doors.add(door)
            return Observation(f"You open {door}.")
        return self._fail("You can't see any such thing.")

    def _close(self, noun: str) -> Observation:
        doors = self._visible_doors()
        if noun in doors:
            door = doors[noun]
            if door not in self.open_doors:
                return self._fail("That's already closed.")
            self.open_doors.discard(door)
            return Observation(f"You close {door}.")
        return self._fail("You can't see any such thing.")

    def _take(self, noun: str) -> Observation:
        if " from " in noun:
            noun = noun.split(" from ", 1)[0].strip()
        item = self._find_on_floor(noun)
        if item is None:
            if self._find_carried(noun):
                return self._fail("You already have it.")
            return self._fail("You can't see any such thing.")
        self.floor[self.room].remove(item)
        self.inventory.append(item)
        text = f"You pick up the {_display(item)} from the ground."
        if self._is_ingredient(item):
            return self._score(text, f"take:{item}")
        return Observation(text)

    def _drop(self, noun: str) -> Observation:
        item = self._find_carried(noun)
        if item is None:
            return self._fail("You can't see any such thing.")
        self.inventory.remove(item)
        self.floor[self.room].append(item)
        return Observation(f"You drop the {_display(item)} on the ground.")

    def _examine(self, noun: str) -> Observation:
        if noun == "cookbook" and self.spec.recipe:
            if self._find_on_floor("cookbook") or self._find_carried("cookbook"):
                return Observation(self.spec.recipe.text())
        item = self._find_carried(noun) or self._find_on_floor(noun)
        if item:
            return Observation(f"The {_display(item)} looks ordinary.")
        for fixture in self.spec.fixtures.get(self.room, ()):
            if fixture.lower() == noun:
                tool = COOK_TOOLS.get(fixture)
                if tool:
                    return Observation(f"Useful for {tool[0]}ing things.")
                return Observation(f"The {fixture} looks sturdy.")
        doors = self._visible_doors()
        if noun in doors:
            door = doors[noun]
            state = "open" if door in self.open_doors else "closed"
            return Observation(f"The {door} is {state}.")
        return self._fail("You can't see any such thing.")

    def _eat(self, noun: str) -> Observation:
        if noun == "meal":
            if self._find_carried("meal"):
                self.inventory.remove("meal")
                self.terminal = True
                self.won = True
                text = (
                    "You eat the meal. Not bad." + SCORE_LINE + "\n\n\n*** The End ***"
                )
                return Observation(text, terminal=True, score_delta=1)
            return self._fail("You can't see any such thing.")
        item = self._find_carried(noun)
        if item is None:
            return self._fail("You can't see any such thing.")
        if self._is_ingredient(item):
            return self._fail(f"You shouldn't eat the {_display(item)}; the recipe needs it.")
        return self._fail("That's plainly inedible.")

    def _process(self, verb: str, rest: str) -> Observation:
        if not rest.endswith(" with knife"):
            return self._fail("Cutting something requires a knife.")
        noun = rest[: -len(" with knife")].strip()
        if not self._find_carried("knife"):
            return self._fail("Cutting something requires a knife.")
        item = self._find_carried(noun)
        if item is None:
            if self._find_on_floor(noun):
                return self._fail(f"You need to take the {noun} first.")
            return self._fail("You can't see any such thing.")
        if item in self.processed:
            return self._fail(f"The {_display(item)} has already been prepared.")
        self.processed[item] = verb
        text = f"You {verb} the {_display(item)}."
        recipe = self.spec.recipe
        if recipe and item in recipe.ingredients and recipe.process[item] == verb:
            return self._score(text, f"process:{item}")
        return Observation(text)

    def _cook(self, rest: str) -> Observation:
        if " with " not in rest:
            return self._fail("Cook it with what?")
        noun, tool_noun = (part.strip() for part in rest.rsplit(" with ", 1))
        tool = None
        for fixture in self.spec.fixtures.get(self.room, ()):
            if fixture.lower() == tool_noun and fixture in COOK_TOOLS:
                tool = fixture
        if tool is None:
            return self._fail("You can't see any such thing.")
        item = self._find_carried(noun)
        if item is None:
            if self._find_on_floor(noun):
                return self._fail(f"You need to take the {noun} first.")
            return self._fail("You can't see any such thing.")
        if item in self.cooked:
            return self._fail(f"The {_display(item)} has already been cooked.")
        recipe = self.spec.recipe
        verb, past = COOK_TOOLS[tool]
        if recipe and item in recipe.ingredients and recipe.cook[item] != tool:
            self.terminal = True
            return Observation(
                f"You {past} the {_display(item)}. The recipe is ruined."
                "\n\n\n*** You lost ***",
                terminal=True,
            )
        self.cooked[item] = tool
        text = f"You {past} the {_display(item)}."
        if recipe and item in recipe.ingredients:
            return self._score(text, f"cook:{item}")
        return Observation(text)

    def _prepare_meal(self) -> Observation:
        recipe = self.spec.recipe
        if not recipe:
            return self._fail("That's not a verb I recognise.")
        if self.room != "Kitchen":
            return self._fail("You can only prepare meals in the Kitchen.")
        ready = all(
            self._find_carried(ing) is not None
            and self.processed.get(ing) == recipe.process[ing]
            and self.cooked.get(ing) == recipe.cook[ing]
            for ing in recipe.ingredients
        )
        if not ready:
            return self._fail("Some ingredients are missing or are not prepared as the recipe says.")
        for ing in recipe.ingredients:
            self.inventory.remove(ing)
        self.inventory.append("meal")
        return Observation("Adding the meal to your inventory.")


# -- ground truth ------------------------------------------------------


def _ground_truth(spec: WorldSpec) -> GroundTruth:
    truth = GroundTruth()
    truth.locations = set(spec.rooms)
    for room, objects in spec.floor.items():
        for obj in objects:
            truth.objects.add((obj, room))
    for room, fixtures in spec.fixtures.items():
        for fixture in fixtures:
            truth.objects.add((fixture, room))
    for room, exits in spec.exits.items():
        for direction, (dest, door) in exits.items():
            truth.edges.add((room, direction, door, dest))

    truth.rules = [
        (
            "go <direction>",
            "an exit leads that way from the current room and its door, if any, is open",
            "the player moves into the adjacent room and sees its description",
        ),
        (
            "open <door>",
            "the named door is reachable from the current room and currently closed",
            "the door opens and the passage becomes usable",
        ),
        (
            "take <object>",
            "the object lies on the floor of the current room",
            "the object moves into the inventory",
        ),
        (
            "drop <object>",
            "the object is in the inventory",
            "the object lands on the floor of the current room",
        ),
    ]
    if spec.recipe:
        truth.rules.extend(
            [
                (
                    "examine cookbook",
                    "the cookbook is visible in the room or carried",
                    "the full recipe with ingredients and directions is revealed",
                ),
                (
                    "slice <ingredient> with knife",
                    "the knife and the ingredient are both in the inventory",
                    "the ingredient is processed the named way",
                ),
                (
                    "cook <ingredient> with <tool>",
                    "the ingredient is carried and the matching cooking tool is in the room",
                    "the ingredient is cooked the way that tool cooks",
                ),
                (
                    "prepare meal",
                    "standing in the Kitchen with every recipe ingredient processed and cooked correctly",
                    "the meal is added to the inventory",
                ),
                (
                    "eat meal",
                    "the meal is in the inventory",
                    "the game is won",
                ),
            ]
        )

    for room in spec.rooms:
        if room == spec.start:
            continue
        steps = _nav_optimal(spec, spec.start, room)
        truth.tasks.append(
            TaskSpec(
                id=f"reach_{room.lower()}",
                goal=f"Find your way to the {room}.",
                success=_reach_predicate(room),
                optimal_steps=steps,
            )
        )
    if spec.recipe:
        plan = solve_cook_task(spec)
        truth.tasks.append(
            TaskSpec(
                id="cook_meal",
                goal=(
                    "Check the cookbook in the kitchen for the recipe, then cook "
                    "the meal it describes and eat it."
                ),
                success=lambda env: bool(getattr(env, "won", False)),
                optimal_steps=len(plan),
            )
        )
    return truth


def _reach_predicate(room: str):
    return lambda env: getattr(env, "room", None) == room


def _nav_route(spec: WorldSpec, start: str, goal: str, opened: frozenset) -> tuple[list[str], frozenset]:
    """Shortest action list from start to goal; opening a door costs a step."""
    from collections import deque

    init = (start, opened)
    queue = deque([init])
    parents: dict = {init: None}
    while queue:
        room, doors = queue.popleft()
        if room == goal:
            actions = []
            cur = (room, doors)
            while parents[cur] is not None:
                cur, action = parents[cur]
                actions.append(action)
            actions.reverse()
            return actions, doors
        for direction, (dest, door) in spec.exits[room].items():
            here = doors
            if door and door not in doors:
                here = frozenset(doors | {door})
                mid = (room, here)
                if mid not in parents:
                    parents[mid] = ((room, doors), f"open {door}")
                    queue.append(mid)
                continue
            nxt = (dest, here)
            if nxt not in parents:
                parents[nxt] = ((room, doors), f"go {direction}")
                queue.append(nxt)
    raise EnvError(f"no route from {start} to {goal}")


def _nav_optimal(spec: WorldSpec, start: str, goal: str) -> int:
    actions, _ = _nav_route(spec, start, goal, frozenset())
    return len(actions)


def solve_task(spec: WorldSpec, task_id: str) -> list[str]:
    """Action sequence the generator stands behind for a task."""
    if task_id.startswith("reach_"):
        goal = next(r for r in spec.rooms if r.lower() == task_id[len("reach_") :])
        actions, _ = _nav_route(spec, spec.start, goal, frozenset())
        return actions
    if task_id == "cook_meal":
        return solve_cook_task(spec)
    raise EnvError(f"unknown task {task_id!r}")


def solve_cook_task(spec: WorldSpec) -> list[str]:
    """Shortest winning plan found over pickup/cook orderings, verified by execution."""
    recipe = spec.recipe
    if recipe is None:
        raise EnvError("world has no recipe task")

    where = {}
    for room, objects in spec.floor.items():
        for obj in objects:
            where[obj] = room
    pickups = ["knife"] + list(recipe.ingredients)
    tool_rooms = sorted({TOOL_ROOM[recipe.cook[ing]] for ing in recipe.ingredients})

    best: list[str] | None = None
    for pickup_order in itertools.permutations(pickups):
        for tool_order in itertools.permutations(tool_rooms):
            plan = _compose_plan(spec, recipe, where, pickup_order, tool_order)
            if plan is None:
                continue
            if _plan_wins(spec, plan) and (best is None or len(plan) < len(best)):
                best = plan
    if best is None:
        raise EnvError("no winning plan found")
    return best


def _compose_plan(spec, recipe, where, pickup_order, tool_order) -> list[str] | None:
    actions: list[str] = []
    room = spec.start
    opened: frozenset = frozenset()
    carried: set[str] = set()
    processed: set[str] = set()
    cooked: set[str] = set()

    def travel(dest: str):
        nonlocal room, opened
        route, opened = _nav_route(spec, room, dest, opened)
        actions.extend(route)
        room = dest

    def opportunistic():
        # process once the knife is in hand; cook whenever the tool is here
        if "knife" in carried:
            for ing in recipe.ingredients:
                if ing in carried and ing not in processed:
                    actions.append(f"{recipe.process[ing]} {_display(ing)} with knife")
                    processed.add(ing)
        for ing in recipe.ingredients:
            tool = recipe.cook[ing]
            if (
                ing in carried
                and ing in processed
                and ing not in cooked
                and TOOL_ROOM[tool] == room
            ):
                actions.append(f"cook {_display(ing)} with {tool.lower()}")
                cooked.add(ing)

    for item in pickup_order:
        travel(where[item])
        actions.append(f"take {_display(item)}")
        carried.add(item)
        opportunistic()
    for dest in tool_order:
        if all(ing in cooked for ing in recipe.ingredients):
            break
        travel(dest)
        opportunistic()
    if not all(ing in cooked for ing in recipe.ingredients):
        return None
    travel("Kitchen")
    actions.append("prepare meal")
    actions.append("eat meal")
    return actions


def _plan_wins(spec: WorldSpec, plan: list[str]) -> bool:
    env = RoomWorld(spec)
    env.reset()
    for action in plan:
        obs = env.step(action)
        if obs.terminal:
            return "The End" in obs.text
    return False
