"""CraftWorld: a miniature survival grid with a small technology tree.

A seeded generator fills a square grid (at most 16x16) with grass and
path terrain, then scatters trees, stones, diamonds, and cows. The
agent moves in four directions or jumps with "Move To [x, y]", harvests
with "Do" on the cell it faces, places structures on front grass, and
crafts at a table. Stone needs a pickaxe; diamond needs a stone pickaxe
or better. First-time milestones raise the score by one, so agents can
be judged on what they unlocked.

Coordinates render as [x, y] with x growing eastward and y southward,
matching the background text handed to agents.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
from collections import deque
from dataclasses import dataclass

from ..errors import EnvError
from .base import (
    EnvCapabilities,
    Environment,
    GroundTruth,
    Observation,
    TaskSpec,
)

DIRECTIONS = {"north": (0, -1), "south": (0, 1), "east": (1, 0), "west": (-1, 0)}
WALKABLE = ("grass", "path")
OBSTACLES = ("tree", "stone", "diamond", "cow", "table", "furnace", "plant")
COW_HITS = 3

RECIPES = {
    "wood pickaxe": ({"wood": 1}, ("table",)),
    "wood sword": ({"wood": 1}, ("table",)),
    "stone pickaxe": ({"wood": 1, "stone": 1}, ("table",)),
    "stone sword": ({"wood": 1, "stone": 1}, ("table",)),
    "iron pickaxe": ({"wood": 1, "coal": 1, "iron": 1}, ("table", "furnace")),
    "iron sword": ({"wood": 1, "coal": 1, "iron": 1}, ("table", "furnace")),
}

PLACEABLES = {
    "table": {"wood": 2},
    "stone": {"stone": 1},
    "furnace": {"stone": 2},
    "plant": {"sapling": 1},
}

DEFAULT_RESOURCES = {"tree": 6, "stone": 5, "diamond": 2, "cow": 2}

_MOVE_TO = re.compile(r"^move to \[(-?\d+),\s*(-?\d+)\]$")

BACKGROUND = """\
The agent is in a 2D grid world, where it can move around, interact with objects, and perform various actions. Each position is represented as [x, y], where x increases eastward, y increases southward. All distances are measured by Manhattan distance, i.e. the summation of x distance and y distance.

#### Available Actions

- Move To [x, y]
- Move West
- Move East
- Move North
- Move South
- Do
- Sleep
- Noop
- Place Stone
- Place Table
- Place Furnace
- Place Plant
- Make Wood Pickaxe
- Make Wood Sword
- Make Stone Pickaxe
- Make Stone Sword
- Make Iron Pickaxe
- Make Iron Sword

#### Tips

- Some actions may need to do multiple times to obtain the final effect.
- Some items may need multiple materials to craft.
- Achievements will be unlocked when they are completed for the first time.
- Check if resources appear in your recent observation, if you see them and need them, try to collect them.
"""


def _pos(x: int, y: int) -> str:
    return f"[{x}, {y}]"


@dataclass(frozen=True)
class CraftSpec:
    seed: int
    side: int
    terrain: dict  # (x, y) -> cell name at generation time
    spawn: tuple[int, int]
    recipes: dict  # item -> (consumes, stations)


def generate(
    seed: int,
    grid: int = 12,
    resources: dict | None = None,
    recipes: dict | None = None,
) -> tuple["CraftWorld", GroundTruth]:
    """Build a seeded grid world and its ground truth."""
    if not 6 <= grid <= 16:
        raise EnvError("grid must be within [6, 16]")
    counts = dict(DEFAULT_RESOURCES)
    if resources:
        unknown = set(resources) - set(DEFAULT_RESOURCES)
        if unknown:
            raise EnvError(f"unknown resources: {sorted(unknown)}")
        counts.update(resources)
    if any(v < 0 for v in counts.values()):
        raise EnvError("resource counts must be non-negative")
    if sum(counts.values()) > grid * grid // 3:
        raise EnvError("too many resources for this grid")
    recipe_table = dict(RECIPES)
    if recipes:
        recipe_table.update(recipes)

    rng = random.Random(seed)
    for attempt in range(200):
        terrain = {(x, y): "grass" for x in range(grid) for y in range(grid)}
        x, y = grid // 2, grid // 2
        for _ in range(grid * 2):
            terrain[(x, y)] = "path"
            dx, dy = rng.choice(sorted(DIRECTIONS.values()))
            x = min(grid - 1, max(0, x + dx))
            y = min(grid - 1, max(0, y + dy))

        third = grid // 3
        middle = sorted(
            p for p, cell in terrain.items()
            if cell in WALKABLE and third <= p[0] < grid - third and third <= p[1] < grid - third
        )
        if not middle:
            continue
        spawn = middle[rng.randrange(len(middle))]

        free = sorted(p for p, cell in terrain.items() if cell == "grass" and p != spawn)
        rng.shuffle(free)
        ok = True
        for name, n in sorted(counts.items()):
            for _ in range(n):
                if not free:
                    ok = False
                    break
                terrain[free.pop()] = name
            if not ok:
                break
        if not ok:
            continue

        if _all_resources_reachable(terrain, spawn, grid):
            spec = CraftSpec(
                seed=seed,
                side=grid,
                terrain=terrain,
                spawn=spawn,
                recipes=recipe_table,
            )
            env = CraftWorld(spec)
            return env, _ground_truth(spec)
    raise EnvError("could not lay out a connected world; adjust params")


def _all_resources_reachable(terrain, spawn, side) -> bool:
    reachable = _reachable_cells(terrain, spawn)
    for (x, y), cell in terrain.items():
        if cell in WALKABLE:
            continue
        neighbors = [(x + dx, y + dy) for dx, dy in DIRECTIONS.values()]
        if not any(n in reachable for n in neighbors):
            return False
    return True


def _reachable_cells(terrain, start) -> set:
    seen = {start}
    queue = deque([start])
    while queue:
        x, y = queue.popleft()
        for dx, dy in DIRECTIONS.values():
            nxt = (x + dx, y + dy)
            if nxt in terrain and nxt not in seen and terrain[nxt] in WALKABLE:
                seen.add(nxt)
                queue.append(nxt)
    return seen


ACTION_INVENTORY = (
    "Move To [x, y]", "Move West", "Move East", "Move North", "Move South",
    "Do", "Sleep", "Noop", "Place Stone", "Place Table", "Place Furnace",
    "Place Plant", "Make Wood Pickaxe", "Make Wood Sword",
    "Make Stone Pickaxe", "Make Stone Sword", "Make Iron Pickaxe",
    "Make Iron Sword",
)


class CraftWorld(Environment):
    name = "craftworld"
    schema_id = "craftworld"
    background = BACKGROUND

    def __init__(self, spec: CraftSpec):
        self.spec = spec
        self._snapshots: dict[str, str] = {}
        self._snap_counter = 0
        self._was_reset = False
        self._init_state()

    # -- state ---------------------------------------------------------

    def _init_state(self):
        self.grid = dict(self.spec.terrain)
        self.pos = self.spec.spawn
        self.facing = "south"
        self.inventory: dict[str, int] = {}
        self.cow_hits: dict[tuple[int, int], int] = {}
        self.achievements: set[str] = set()

    def _state_blob(self) -> str:
        return json.dumps(
            {
                "grid": {f"{x},{y}": cell for (x, y), cell in sorted(self.grid.items())},
                "pos": list(self.pos),
                "facing": self.facing,
                "inventory": self.inventory,
                "cow_hits": {f"{x},{y}": n for (x, y), n in sorted(self.cow_hits.items())},
                "achievements": sorted(self.achievements),
            },
            sort_keys=True,
        )

    def _load_blob(self, blob: str):
        data = json.loads(blob)
        self.grid = {
            tuple(int(v) for v in key.split(",")): cell
            for key, cell in data["grid"].items()
        }
        self.pos = tuple(data["pos"])
        self.facing = data["facing"]
        self.inventory = {k: int(v) for k, v in data["inventory"].items()}
        self.cow_hits = {
            tuple(int(v) for v in key.split(",")): n
            for key, n in data["cow_hits"].items()
        }
        self.achievements = set(data["achievements"])

    # -- protocol ------------------------------------------------------

    def reset(self) -> Observation:
        self._init_state()
        self._was_reset = True
        return Observation("You wake up in an open world.\n" + self._status())

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
                "side": self.spec.side,
                "terrain": {f"{x},{y}": c for (x, y), c in sorted(self.spec.terrain.items())},
                "spawn": list(self.spec.spawn),
                "recipes": {k: [v[0], list(v[1])] for k, v in sorted(self.spec.recipes.items())},
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]

    # -- observation ----------------------------------------------------

    def _status(self) -> str:
        x, y = self.pos
        seen: list[str] = []
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                cell = self.grid.get((x + dx, y + dy))
                if cell and cell not in seen:
                    seen.append(cell)
        if self.inventory:
            items = ", ".join(
                f"{n} {name}" for name, n in sorted(self.inventory.items())
            )
            inventory = f"Inventory: {items}."
        else:
            inventory = "Inventory: empty."
        return (
            f"Position {_pos(x, y)}, facing {self.facing}.\n"
            f"You can see: {', '.join(seen)}.\n"
            f"{inventory}"
        )

    def _front(self) -> tuple[int, int]:
        dx, dy = DIRECTIONS[self.facing]
        return (self.pos[0] + dx, self.pos[1] + dy)

    def _result(self, line: str, achievement: str | None = None) -> Observation:
        delta = 0
        if achievement and achievement not in self.achievements:
            self.achievements.add(achievement)
            title = achievement.replace("_", " ").title()
            line += f"\nAchievement unlocked: {title}!"
            delta = 1
        return Observation(line + "\n" + self._status(), score_delta=delta)

    # -- dynamics -------------------------------------------------------

    def step(self, action: str) -> Observation:
        if not self._was_reset:
            raise EnvError("call reset() before step()")
        act = " ".join(action.strip().split())
        low = act.lower()

        move_to = _MOVE_TO.match(low)
        if move_to:
            return self._move_to(int(move_to.group(1)), int(move_to.group(2)))
        if low.startswith("move ") and low[5:] in DIRECTIONS:
            return self._move(low[5:])
        if low == "do":
            return self._do()
        if low == "sleep":
            return self._result("You sleep for a while.")
        if low == "noop":
            return self._result("Time passes.")
        if low.startswith("place "):
            return self._place(low[6:])
        if low.startswith("make "):
            return self._make(low[5:])
        return self._result("Invalid action.")

    def _move(self, direction: str) -> Observation:
        self.facing = direction
        dx, dy = DIRECTIONS[direction]
        target = (self.pos[0] + dx, self.pos[1] + dy)
        if self.grid.get(target) in WALKABLE:
            self.pos = target
            return self._result(f"You move {direction}.")
        return self._result(f"You turn {direction}; the way is blocked.")

    def _move_to(self, tx: int, ty: int) -> Observation:
        target = (tx, ty)
        if target not in self.grid:
            return self._result("That position is outside the world.")
        if target == self.pos:
            return self._result("You are already there.")
        paths = self._paths_from(self.pos)
        if self.grid[target] in WALKABLE:
            if target in paths:
                self.pos = target
                self.facing = paths[target]
                return self._result(f"You arrive at {_pos(tx, ty)}.")
            stop = self._closest_reachable(paths, target)
            if stop is None or stop == self.pos:
                return self._result("You can't find a path there.")
            self.pos = stop
            self.facing = paths[stop]
            return self._result(
                f"You stop at {_pos(*stop)}; the way onward is blocked."
            )
        # aiming at an obstacle: stand next to it, facing it
        options = []
        for direction, (dx, dy) in sorted(DIRECTIONS.items()):
            stand = (tx - dx, ty - dy)
            if stand == self.pos or stand in paths:
                options.append((stand, direction))
        if not options:
            return self._result("You can't find a path there.")
        def rank(option):
            stand, _ = option
            if stand == self.pos:
                return (0, 0, 0)
            dist = abs(stand[0] - self.pos[0]) + abs(stand[1] - self.pos[1])
            return (1, dist, (stand[1], stand[0]))

        stand, direction = min(options, key=rank)
        if stand != self.pos:
            self.pos = stand
        self.facing = direction
        return self._result(f"You stop next to {_pos(tx, ty)}.")

    def _paths_from(self, start) -> dict:
        """Reachable walkable cells mapped to the direction of the final step."""
        seen = {start: self.facing}
        queue = deque([start])
        while queue:
            x, y = queue.popleft()
            for direction, (dx, dy) in sorted(DIRECTIONS.items()):
                nxt = (x + dx, y + dy)
                if nxt not in seen and self.grid.get(nxt) in WALKABLE:
                    seen[nxt] = direction
                    queue.append(nxt)
        del seen[start]
        return seen

    def _closest_reachable(self, paths, target):
        if not paths:
            return None
        return min(
            paths,
            key=lambda p: (abs(p[0] - target[0]) + abs(p[1] - target[1]), p[1], p[0]),
        )

    def _do(self) -> Observation:
        front = self._front()
        cell = self.grid.get(front)
        if cell == "grass":
            self.inventory["sapling"] = self.inventory.get("sapling", 0) + 1
            return self._result("You collect 1 sapling from the grass.", "collect_sapling")
        if cell == "tree":
            self.grid[front] = "grass"
            self.inventory["wood"] = self.inventory.get("wood", 0) + 1
            return self._result("You collect 1 wood from the tree.", "collect_wood")
        if cell == "stone":
            if not any(k.endswith("pickaxe") for k in self.inventory):
                return self._result("You need a pickaxe to mine stone.")
            self.grid[front] = "path"
            self.inventory["stone"] = self.inventory.get("stone", 0) + 1
            return self._result("You collect 1 stone.", "collect_stone")
        if cell == "diamond":
            if not any(
                k in ("stone_pickaxe", "iron_pickaxe") for k in self.inventory
            ):
                return self._result("You need a stronger pickaxe to mine diamond.")
            self.grid[front] = "path"
            self.inventory["diamond"] = self.inventory.get("diamond", 0) + 1
            return self._result("You collect 1 diamond.", "collect_diamond")
        if cell == "cow":
            hits = self.cow_hits.get(front, 0) + 1
            if hits < COW_HITS:
                self.cow_hits[front] = hits
                return self._result("You hit the cow.")
            self.cow_hits.pop(front, None)
            self.grid[front] = "grass"
            return self._result(
                "You defeat the cow. Eating it restores your food.", "eat_cow"
            )
        return self._result("There is nothing in front of you to interact with.")

    def _place(self, noun: str) -> Observation:
        if noun not in PLACEABLES:
            return self._result("Invalid action.")
        cost = PLACEABLES[noun]
        if any(self.inventory.get(item, 0) < n for item, n in cost.items()):
            return self._result("You don't have the materials for that.")
        front = self._front()
        if self.grid.get(front) != "grass":
            return self._result("You need open grass in front of you.")
        for item, n in cost.items():
            self.inventory[item] -= n
            if not self.inventory[item]:
                del self.inventory[item]
        self.grid[front] = noun
        return self._result(f"You place a {noun} in front of you.", f"place_{noun}")

    def _make(self, noun: str) -> Observation:
        if noun not in self.spec.recipes:
            return self._result("Invalid action.")
        consumes, stations = self.spec.recipes[noun]
        x, y = self.pos
        nearby = {
            self.grid.get((x + dx, y + dy))
            for dx in (-1, 0, 1)
            for dy in (-1, 0, 1)
            if (dx, dy) != (0, 0)
        }
        for station in stations:
            if station not in nearby:
                return self._result(f"You need to be next to a {station} to craft.")
        if any(self.inventory.get(item, 0) < n for item, n in consumes.items()):
            return self._result("You don't have the materials for that.")
        for item, n in consumes.items():
            self.inventory[item] -= n
            if not self.inventory[item]:
                del self.inventory[item]
        key = noun.replace(" ", "_")
        self.inventory[key] = self.inventory.get(key, 0) + 1
        return self._result(f"You make a {noun}.", f"make_{key}")


# -- ground truth ------------------------------------------------------


def _ground_truth(spec: CraftSpec) -> GroundTruth:
    truth = GroundTruth()
    reachable = _reachable_cells(spec.terrain, spec.spawn)
    truth.locations = {_pos(x, y) for x, y in reachable}
    for (x, y), cell in sorted(spec.terrain.items()):
        if cell not in WALKABLE:
            truth.objects.add((cell, _pos(x, y)))

    truth.rules = [
        (
            "Do",
            "the front adjacent cell holds something interactable; stone needs a pickaxe in inventory",
            "collects the resource in front: sapling from grass, wood from tree, stone from stone; tree and stone cells are cleared",
        ),
        (
            "Move North",
            "the adjacent north cell is grass or path with no obstacle",
            "the agent moves one cell north and faces north",
        ),
        (
            "Move To [x, y]",
            "the target coordinates are known and a clear path exists",
            "the agent walks toward the target and stops at the last open cell",
        ),
        (
            "Place Table",
            "at least 2 wood in inventory and the front cell is grass",
            "a table replaces the front grass cell, consuming 2 wood",
        ),
        (
            "Place Stone",
            "at least 1 stone in inventory and the front cell is grass",
            "a stone block replaces the front grass cell and can be mined again",
        ),
        (
            "Place Plant",
            "at least 1 sapling in inventory and the front cell is grass",
            "a plant replaces the front grass cell, consuming one sapling",
        ),
        (
            "Make Wood Pickaxe",
            "at least 1 wood in inventory and the agent is adjacent to a table",
            "consumes 1 wood and adds a wood pickaxe to the inventory",
        ),
        (
            "Make Stone Pickaxe",
            "at least 1 wood and 1 stone in inventory and the agent is adjacent to a table",
            "consumes 1 wood and 1 stone and adds a stone pickaxe to the inventory",
        ),
    ]

    trees = sum(1 for cell in spec.terrain.values() if cell == "tree")
    stones = sum(1 for cell in spec.terrain.values() if cell == "stone")

    def add_task(task_id, goal, achievement):
        plan = solve_task(spec, task_id)
        truth.tasks.append(
            TaskSpec(
                id=task_id,
                goal=goal,
                success=_has_achievement(achievement),
                optimal_steps=len(plan),
            )
        )

    if trees >= 1:
        add_task("collect_1_wood", "Collect 1 wood.", "collect_wood")
    if trees >= 2:
        add_task("place_table", "Place a crafting table.", "place_table")
    if trees >= 3:
        add_task("make_wood_pickaxe", "Make a wood pickaxe.", "make_wood_pickaxe")
    if trees >= 3 and stones >= 1:
        add_task("collect_1_stone", "Collect 1 stone.", "collect_stone")
    return truth


def _has_achievement(name: str):
    return lambda env: name in getattr(env, "achievements", set())


# -- scripted solver ----------------------------------------------------


def solve_task(spec: CraftSpec, task_id: str) -> list[str]:
    """Action sequence the generator stands behind for a task."""
    env = CraftWorld(spec)
    env.reset()
    actions: list[str] = []

    def do_step(action: str):
        actions.append(action)
        return env.step(action)

    def face_or_approach(cell_kind: str):
        target = _nearest(env, cell_kind)
        if target is None:
            raise EnvError(f"no reachable {cell_kind} left")
        tx, ty = target
        x, y = env.pos
        if (tx - x, ty - y) in DIRECTIONS.values():
            direction = next(
                d for d, (dx, dy) in DIRECTIONS.items() if (dx, dy) == (tx - x, ty - y)
            )
            if env.facing != direction:
                do_step(f"Move {direction.capitalize()}")
        else:
            do_step(f"Move To {_pos(tx, ty)}")

    def harvest(cell_kind: str, item: str, n: int):
        while env.inventory.get(item, 0) < n:
            if env.grid.get(env._front()) != cell_kind:
                face_or_approach(cell_kind)
            if env.grid.get(env._front()) == cell_kind:
                do_step("Do")

    def place_table():
        # the last harvested tree cell is grass now and sits right in front
        if env.grid.get(env._front()) != "grass":
            raise EnvError("front cell is not grass after harvesting")
        do_step("Place Table")

    if task_id == "collect_1_wood":
        harvest("tree", "wood", 1)
    elif task_id == "place_table":
        harvest("tree", "wood", 2)
        place_table()
    elif task_id == "make_wood_pickaxe":
        harvest("tree", "wood", 3)
        place_table()
        do_step("Make Wood Pickaxe")
    elif task_id == "collect_1_stone":
        harvest("tree", "wood", 3)
        place_table()
        do_step("Make Wood Pickaxe")
        harvest("stone", "stone", 1)
    else:
        raise EnvError(f"unknown task {task_id!r}")
    return actions


def _nearest(env: CraftWorld, cell_kind: str):
    """Closest cell of a kind with a reachable or current adjacent stand cell."""
    stands = env._paths_from(env.pos)
    best = None
    best_rank = None
    for (x, y), cell in sorted(env.grid.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        if cell != cell_kind:
            continue
        for dx, dy in sorted(DIRECTIONS.values()):
            stand = (x - dx, y - dy)
            if stand == env.pos:
                dist = 0
            elif stand in stands:
                dist = abs(stand[0] - env.pos[0]) + abs(stand[1] - env.pos[1])
            else:
                continue
            rank = (dist, y, x)
            if best_rank is None or rank < best_rank:
                best_rank = rank
                best = (x, y)
    return best
