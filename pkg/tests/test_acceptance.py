"""End-to-end acceptance checks; each test prints a one-line verdict."""

import random
import re
import socket
import time
from contextlib import contextmanager
from pathlib import Path
from unittest import mock

import pytest

from ilcl.document import (
    Document,
    Entity,
    Known,
    KnownList,
    NOTHING,
    UNKNOWN,
    ActionRule,
    coverage_against,
    parse_document,
    render_document,
    validate_document,
)
from ilcl.envs import roomworld
from ilcl.envs.base import CountingEnv
from ilcl.evaluate import (
    WITH_CONTEXT,
    WITHOUT_CONTEXT,
    DepthFirstExplorer,
    EvalInstance,
    coverage_curve,
    run_benchmark,
    write_report,
)
from ilcl.explore import Budget, PathExecutor, rule_key_result, run_exploration
from ilcl.forest import (
    Node,
    StateNode,
    new_forest,
    parse_forest,
    parse_path,
    render_forest,
    validate_path,
)
from ilcl.llm.oracle import OracleProvider
from ilcl.llm.providers import RecordingProvider, ScriptedProvider
from ilcl.schema import parse_schema

from task_routes import optimal_actions, reach_room

SCHEMA = parse_schema(
    (Path(__file__).resolve().parent.parent / "src/ilcl/schemas/roomworld.md").read_text()
)
GOLDEN_DIR = Path(__file__).resolve().parent / "golden"

WORLD_ARGS = dict(n_rooms=8, n_objects=12, door_density=0.35, with_recipe=True)
SEEDS = (1, 2, 3, 4, 5)


@contextmanager
def no_network():
    """Fail the test if anything opens a socket connection."""

    def deny(*args, **kwargs):
        raise AssertionError("network access attempted during an offline run")

    with mock.patch.object(socket.socket, "connect", deny), mock.patch(
        "socket.create_connection", deny
    ):
        yield


def room_adjacency(truth):
    adj: dict[str, set[str]] = {}
    for room, _direction, _door, dest in truth.edges:
        adj.setdefault(room, set()).add(dest)
    return adj


def bfs_distance(adj, start, goal):
    frontier, dist = [start], {start: 0}
    while frontier:
        nxt = []
        for room in frontier:
            if room == goal:
                return dist[room]
            for peer in sorted(adj.get(room, ())):
                if peer not in dist:
                    dist[peer] = dist[room] + 1
                    nxt.append(peer)
        frontier = nxt
    raise AssertionError(f"{goal} unreachable from {start}")


def step_budget_bound(truth, start):
    """4x the BFS length of a depth-first tour over the room graph."""
    adj = room_adjacency(truth)
    order: list[str] = []
    seen: set[str] = set()

    def visit(room):
        seen.add(room)
        order.append(room)
        for peer in sorted(adj.get(room, ())):
            if peer not in seen:
                visit(peer)

    visit(start)
    tour = sum(bfs_distance(adj, a, b) for a, b in zip(order, order[1:]))
    return 4 * tour


@pytest.fixture(scope="module")
def oracle_runs(tmp_path_factory):
    """One oracle exploration per seed, timed and offline, artifacts kept."""
    runs = []
    base = tmp_path_factory.mktemp("oracle-runs")
    with no_network():
        for seed in SEEDS:
            env, truth = roomworld.generate(seed, **WORLD_ARGS)
            out_dir = base / f"seed-{seed}"
            started = time.perf_counter()
            result = run_exploration(
                env,
                SCHEMA,
                OracleProvider(SCHEMA),
                Budget(),
                background=env.background,
                mode="action",
                instance_id=f"roomworld-{seed}",
                truth=truth,
                out_dir=out_dir,
            )
            elapsed = time.perf_counter() - started
            runs.append((seed, env, truth, result, out_dir, elapsed))
    return runs


def test_oracle_end_to_end(oracle_runs):
    worst_ratio = 0.0
    slowest = 0.0
    for seed, env, truth, result, _out_dir, elapsed in oracle_runs:
        assert result.stop_reason == "gaps-resolved", f"seed {seed}: {result.stop_reason}"
        cov = coverage_against(result.document, truth)
        assert cov.locations_fraction >= 0.95, f"seed {seed}: locations {cov.locations_fraction}"
        assert cov.objects_fraction >= 0.95, f"seed {seed}: objects {cov.objects_fraction}"
        assert validate_document(result.document, SCHEMA) == []
        bound = step_budget_bound(truth, env.spec.start)
        assert result.steps_used <= bound, f"seed {seed}: {result.steps_used} > {bound}"
        worst_ratio = max(worst_ratio, result.steps_used / bound)
        assert elapsed < 10.0, f"seed {seed}: {elapsed:.1f}s"
        slowest = max(slowest, elapsed)
    print(
        f"[PASS] oracle end-to-end: seeds {SEEDS} gaps-resolved offline, "
        f"worst step ratio {worst_ratio:.2f} of bound, slowest run {slowest:.2f}s"
    )


ARTIFACTS = ("document.md", "forest.json", "metrics.csv")


def run_seed2(provider, out_dir):
    env, truth = roomworld.generate(2, **WORLD_ARGS)
    return run_exploration(
        env,
        SCHEMA,
        provider,
        Budget(),
        background=env.background,
        mode="action",
        instance_id="roomworld-2",
        truth=truth,
        out_dir=out_dir,
    )


def test_recorded_rerun_is_byte_identical(tmp_path):
    cassette = tmp_path / "run.cassette"
    recorder = RecordingProvider(OracleProvider(SCHEMA), cassette)
    run_seed2(recorder, tmp_path / "rec")
    recorder.save()

    for name in ("a", "b"):
        run_seed2(ScriptedProvider.from_cassette(cassette), tmp_path / name)
    for name in ARTIFACTS:
        first = (tmp_path / "rec" / name).read_bytes()
        assert (tmp_path / "a" / name).read_bytes() == first, name
        assert (tmp_path / "b" / name).read_bytes() == first, name
    print("[PASS] determinism: cassette reruns byte-identical on document.md, forest.json, metrics.csv")


def action_pool(truth):
    doors = sorted({door for _room, _direction, door, _dest in truth.edges if door})
    pool = ["look", "inventory", "go north", "go south", "go east", "go west"]
    return pool + [f"open {door}" for door in doors]


def fresh_executor(seed, use_checkpoints):
    env, _truth = roomworld.generate(seed, **WORLD_ARGS)
    counting = CountingEnv(env)
    first = counting.reset()
    forest = new_forest(rule_key_result("start", first), mode="action")
    executor = PathExecutor(
        counting,
        forest,
        Budget(max_env_steps=100_000),
        mode="action",
        background=env.background,
        use_checkpoints=use_checkpoints,
    )
    executor.mark_initial_state()
    return counting, executor


def record_tuples(traj):
    return [(r.action, r.observation.text, r.key_result) for r in traj.records]


def test_replay_soundness():
    rng = random.Random(20260818)
    for trial in range(200):
        seed = rng.choice(SEEDS)
        _env, truth = roomworld.generate(seed, **WORLD_ARGS)
        pool = action_pool(truth)
        steps = rng.choices(pool, k=rng.randint(1, 5))
        prefix_len = rng.randrange(len(steps))
        full = parse_path("init_state -> " + " -> ".join(steps))
        prefix = (
            parse_path("init_state -> " + " -> ".join(steps[:prefix_len]))
            if prefix_len
            else None
        )

        def run_mode(use_checkpoints):
            counting, executor = fresh_executor(seed, use_checkpoints)
            if prefix is not None:
                executor.execute_path(prefix)
            before = counting.steps_used
            traj = executor.execute_path(full)
            return traj, counting.steps_used - before

        snap, snap_charged = run_mode(True)
        rep1, rep_charged1 = run_mode(False)
        rep2, rep_charged2 = run_mode(False)

        ctx = f"trial {trial}: seed {seed} path {steps!r} prefix {prefix_len}"
        assert record_tuples(rep1) == record_tuples(rep2), ctx
        assert rep_charged1 == rep_charged2, ctx
        assert rep1.replayed_prefix_len == rep2.replayed_prefix_len, ctx
        assert record_tuples(snap) == record_tuples(rep1), ctx
        assert snap.replayed_prefix_len == 0, ctx
        assert snap_charged == rep_charged1 - rep1.replayed_prefix_len, ctx
    print("[PASS] replay soundness: 200 random paths, identical trajectories, "
          "snapshot runs save exactly the replay prefix")


# A mid-run forest from a cooking game, kept verbatim as a fixed fixture
# for the verdict table. Three named states, every executed node done.
KITCHEN_FOREST = """\
- init_state: Agent's location: Livingroom. The livingroom contains an empty sofa. The livingroom has a closed fiberglass door leading south, an exit to the east without a door, and an exit to the north. Agent is hungry and needs to cook a meal.
  - examine sofa: The sofa is reliable.
    - inventory: You are carrying nothing.
  - go east: Agent's location: Bedroom. The bedroom contains a large empty bed. The bedroom has an entranceway to the north without a door and an exit to the west without a door.
  - go north: Agent's location: Kitchen. The kitchen contains a fridge, an oven, a table with a cookbook, a counter with a raw purple potato, a red apple, a raw yellow potato and a knife, and an empty stove. The kitchen has a closed frosted-glass door leading north, an exit to the east without a door, and an entranceway to the south without a door. [reach in_kitchen]
  - look: Agent's location: Livingroom. The livingroom contains an empty sofa. The livingroom has a closed fiberglass door leading south, an exit to the east without a door, and an exit to the north.
    - examine sofa: The sofa is reliable.
      - inventory: You are carrying nothing.
  - open fiberglass door: You open fiberglass door.
    - go south: Agent's location: Driveway. The driveway has an open fiberglass door leading north and an exit to the east without a door.

- in_kitchen: Agent is in the Kitchen. The kitchen contains a fridge, an oven, a table with a cookbook, a counter with a raw purple potato, a red apple, a raw yellow potato and a knife, and an empty stove. The kitchen has a closed frosted-glass door leading north, an exit to the east without a door, and an entranceway to the south without a door.
  - examine cookbook: Recipe requires: orange bell pepper, pork chop, purple potato, red onion, white onion. Preparation steps: dice orange bell pepper and white onion, slice pork chop and purple potato and red onion, grill orange bell pepper/pork chop/purple potato/white onion, roast red onion, then prepare meal.
  - examine fridge: The fridge looks durable and is closed.
  - go east: Agent's location: Corridor. The corridor has a closed sliding patio door leading north, an exit to the east without a door, an entranceway to the south without a door, and an entranceway to the west without a door.
  - open frosted-glass door: You open frosted-glass door.
    - go north: Agent's location: Pantry. The pantry contains a wooden shelf. The pantry has an open frosted-glass door leading south.
  - take knife from counter: You take the knife from the counter.
    - take raw purple potato from counter: You take the purple potato from the counter.

- in_street: Agent is in the Street. The street has a closed sliding door leading east and an exit to the west without a door.
"""

# (path, expected verdict, expected start of the new suffix)
VERDICT_CASES = [
    # bedroom was observed but never promoted to a state
    ("in_bedroom -> go west", "nonexistent_state", 0),
    ("in_corridor -> look", "nonexistent_state", 0),
    # fully explored chains add nothing
    ("init_state -> examine sofa", "redundant", 0),
    ("init_state -> examine sofa -> inventory", "redundant", 0),
    ("init_state -> look -> examine sofa -> inventory", "redundant", 0),
    ("in_kitchen -> open frosted-glass door -> go north", "redundant", 0),
    # seven steps against a limit of six
    ("init_state -> go east -> go west -> go east -> go west -> go east -> go west -> look", "too_long", 0),
    ("in_street -> a -> b -> c -> d -> e -> f -> g", "too_long", 0),
    # fresh work, anchored at the deepest explored step
    ("in_kitchen -> go east -> go east", "ok", 1),
    ("in_kitchen -> go east -> open sliding patio door -> go north", "ok", 1),
    ("in_street -> open sliding door -> go east", "ok", 0),
    ("init_state -> open fiberglass door -> go south -> go east", "ok", 2),
]


def test_path_verdict_table():
    forest = parse_forest(KITCHEN_FOREST)
    assert render_forest(forest) == KITCHEN_FOREST
    for text, variant, suffix_start in VERDICT_CASES:
        verdict = validate_path(forest, parse_path(text), max_len=6)
        assert verdict.variant == variant, f"{text}: {verdict.variant}"
        if variant == "ok":
            assert verdict.new_suffix_start == suffix_start, text
    print(f"[PASS] path-validation table: {len(VERDICT_CASES)}/12 verdicts match the fixture")


class AdversarialProvider:
    """Wraps the oracle; injects doomed edits and garbage apply replies."""

    def __init__(self, inner, rng, poison, apply_garbage):
        self.inner = inner
        self.rng = rng
        self.poison = poison
        self.apply_garbage = apply_garbage  # garbage replies before relenting
        self.injected = 0

    def _poison_body(self, section):
        if section == "extractor_rule_edits":
            return (
                f"Add rule | action: summon {self.poison} | "
                "requirements: None | key_result: None | note: None"
            )
        return f"Update | Kitchen | north: sealed portal to {self.poison}"

    def complete(self, request):
        tid = request.template_id
        if tid in ("extractor_obs_edits", "extractor_rule_edits"):
            reply = self.inner.complete(request)
            if self.injected == 0 or self.rng.random() < 0.5:
                self.injected += 1
                used = [int(m) for m in re.findall(r"<modification(\d+)>", reply)]
                nxt = max(used, default=0) + 1
                block = f"<modification{nxt}>\n{self._poison_body(tid)}\n</modification{nxt}>"
                reply = f"{reply}\n{block}"
            return reply
        if tid == "extractor_apply" and request.attempt < self.apply_garbage:
            return "<knowledge>\n- Mystery Zone:\n  - bogus_slot: 12\n</knowledge>"
        return self.inner.complete(request)


def test_edit_pipeline_rejects_poison():
    fallbacks = 0
    for case in range(50):
        rng = random.Random(7000 + case)
        seed = rng.choice(SEEDS)
        poison = f"poisoned artifact {case:03d}"
        garbage = rng.choice([0, 3, 99])
        fallbacks += garbage == 99
        provider = AdversarialProvider(OracleProvider(SCHEMA), rng, poison, garbage)
        env, truth = roomworld.generate(seed, **WORLD_ARGS)
        result = run_exploration(
            env,
            SCHEMA,
            provider,
            Budget(),
            background=env.background,
            mode="action",
            instance_id=f"roomworld-{seed}",
            truth=truth,
        )
        assert provider.injected > 0
        text = render_document(result.document, SCHEMA)
        assert validate_document(parse_document(text, SCHEMA), SCHEMA) == []
        assert poison not in text, f"case {case}: rejected edit leaked into the document"
    assert fallbacks > 0
    print("[PASS] edit-pipeline safety: 50/50 adversarial runs end valid with no rejected content")


LOCATION_POOL = [
    "Kitchen", "Pantry", "Scullery", "Cellar", "Attic", "Greenhouse",
    "Library", "Workshop", "Vault", "Landing", "Boathouse", "Observatory",
]
OBJECT_POOL = [
    "brass key", "old lantern", "coil of rope", "red apple", "tin cup",
    "field notebook", "iron skillet", "wool blanket", "glass jar",
]
DOOR_POOL = ["oak door", "pine door", "sliding patio door", "frosted-glass door"]
DIRECTIONS = ("west", "east", "north", "south")


def random_document(rng):
    doc = Document()
    names = rng.sample(LOCATION_POOL, rng.randint(1, 6))
    for name in names:
        attrs = {}
        roll = rng.random()
        if roll < 0.25:
            attrs["objects"] = UNKNOWN
        elif roll < 0.5:
            attrs["objects"] = NOTHING
        else:
            attrs["objects"] = KnownList(rng.sample(OBJECT_POOL, rng.randint(1, 4)))
        for direction in DIRECTIONS:
            roll = rng.random()
            if roll < 0.3:
                attrs[direction] = UNKNOWN
            elif roll < 0.5:
                attrs[direction] = NOTHING
            else:
                dest = rng.choice(names + ["Unknown"])
                kind = rng.choice(
                    ["exit (without door)", "entranceway (without door)"]
                    + [f"{state} {door}" for state in ("a closed", "an open") for door in DOOR_POOL]
                )
                attrs[direction] = Known(f"{kind} to {dest}")
        doc.add_entity(Entity("location", name, attrs))
    for i in range(rng.randint(0, 3)):
        doc.action_rules.append(
            ActionRule(
                action=rng.choice(["go <direction>", "open <door>", "take <object>", "look"]) + f" #{i}",
                requirements=rng.choice(["None", "agent holds the key", "door must be open"]),
                key_result=rng.choice(["None", "the agent moves one room", "reveals the room"]),
                note=rng.choice(["None", "fails on locked doors"]),
            )
        )
    return doc


WORD_POOL = [
    "examine shelf", "go north", "go east", "open hatch", "take lamp",
    "read plaque", "pull lever", "look", "inventory", "climb ladder",
]
RESULT_POOL = [
    "Agent's location: Cellar. Dust everywhere.",
    "You take the lamp.",
    "Nothing happens.",
    "action failed: the hatch is locked",
    "A plaque reads: beware of drafts.",
    "TODO",
]


def random_forest(rng):
    forest = new_forest("Agent wakes in a round room.")
    promoted = [f"in_state_{i}" for i in range(rng.randint(0, 2))]
    for name in promoted:
        forest.states[name] = StateNode(name, f"Agent is somewhere new ({name}).")

    def grow(parent, depth):
        for _ in range(rng.randint(0, 3)):
            label = rng.choice(WORD_POOL)
            if parent.child(label) is not None:
                continue
            node = Node(label)
            parent.children.append(node)
            result = rng.choice(RESULT_POOL)
            if result == "TODO":
                continue
            node.key_result = result
            node.status = "failed" if result.startswith("action failed") else "done"
            if promoted and rng.random() < 0.15:
                node.promoted_to = rng.choice(promoted)
            if depth < 3:
                grow(node, depth + 1)

    for state in forest.states.values():
        grow(state, 1)
    return forest


def test_round_trip_identity():
    for i in range(1000):
        doc = random_document(random.Random(i))
        text = render_document(doc, SCHEMA)
        again = render_document(parse_document(text, SCHEMA), SCHEMA)
        assert again == text, f"document instance {i}"
    for i in range(1000):
        forest = random_forest(random.Random(10_000 + i))
        text = render_forest(forest)
        again = render_forest(parse_forest(text))
        assert again == text, f"forest instance {i}"
    print("[PASS] round-trips: 1000 documents and 1000 forests render-parse-render identical")


class ScriptedRoute:
    """Replays a fixed action list through the agent loop, then stops."""

    def __init__(self, actions):
        self.queue = list(actions)

    def complete(self, request):
        action = self.queue.pop(0) if self.queue else "stop"
        return f"<action>{action}</action>"


BUDGETS = (4, 12, 40, 400)


def build_benchmark():
    instances, truths, routes = [], {}, {}
    for seed in SEEDS:
        env, truth = roomworld.generate(seed, **WORLD_ARGS)
        inst_id = f"roomworld-{seed}"
        truths[inst_id] = truth
        for task in truth.tasks:
            if task.id == "cook_meal":
                routes[(inst_id, task.id)] = roomworld.solve_cook_task(env.spec)
            else:
                routes[(inst_id, task.id)] = optimal_actions(
                    truth, env.spec.start, reach_room(truth, task.id)
                )
        instances.append(
            EvalInstance(
                id=inst_id,
                make_env=lambda seed=seed: roomworld.generate(seed, **WORLD_ARGS)[0],
                tasks=list(truth.tasks),
            )
        )

    def factory(inst, task, condition, repeat):
        if condition == WITH_CONTEXT:
            return ScriptedRoute(routes[(inst.id, task.id)])
        return DepthFirstExplorer()

    return instances, truths, factory


def test_downstream_protocol(tmp_path):
    instances, truths, factory = build_benchmark()
    report = run_benchmark(instances, BUDGETS, factory)

    optimal = {
        (inst_id, task.id): task.optimal_steps
        for inst_id, truth in truths.items()
        for task in truth.tasks
    }
    cap = max(BUDGETS)
    scripted_ok = heuristic_slow = total = 0
    for row in report.rows:
        if row.budget != cap:
            continue
        total += 1
        best = optimal[(row.instance, row.task)]
        if row.condition == WITH_CONTEXT:
            assert row.success and row.steps <= best + 2, (row, best)
            scripted_ok += 1
        else:
            heuristic_slow += (not row.success) or row.steps >= 2 * best
    tasks = total // 2
    assert scripted_ok == tasks
    slow_fraction = heuristic_slow / tasks
    assert slow_fraction >= 0.8, f"heuristic needed 2x optimal on only {slow_fraction:.0%}"

    write_report(report, tmp_path)
    for name in ("report.csv", "report.md"):
        got = (tmp_path / name).read_bytes()
        want = (GOLDEN_DIR / name).read_bytes()
        assert got == want, f"{name} deviates from the golden copy"
    print(
        f"[PASS] downstream protocol: scripted routes within optimal+2 on {tasks}/{tasks} tasks, "
        f"heuristic needed 2x optimal on {slow_fraction:.0%}, reports match goldens"
    )


def test_coverage_curve_monotone(oracle_runs):
    for seed, _env, _truth, _result, out_dir, _elapsed in oracle_runs:
        curve = coverage_curve(out_dir)
        assert len(curve) >= 2, f"seed {seed}: curve too short"
        for (s0, loc0, obj0), (s1, loc1, obj1) in zip(curve, curve[1:]):
            assert s1 >= s0, f"seed {seed}: steps regressed"
            assert loc1 >= loc0, f"seed {seed}: location coverage dipped"
            assert obj1 >= obj0, f"seed {seed}: object coverage dipped"
        assert curve[-1][1] >= 0.95 and curve[-1][2] >= 0.95
    print("[PASS] coverage curves: non-decreasing per iteration on all five oracle runs")
