"""Downstream evaluation harness: episodes, benchmark, reports."""

from pathlib import Path

import pytest

from ilcl.document import Document, parse_document, render_document
from ilcl.envs import roomworld
from ilcl.envs.base import TaskSpec
from ilcl.evaluate import (
    BenchRow,
    BenchmarkReport,
    DepthFirstExplorer,
    EvalInstance,
    coverage_curve,
    parse_report_csv,
    react_episode,
    render_report_csv,
    render_report_md,
    run_benchmark,
    write_report,
)
from ilcl.llm.providers import ScriptedProvider
from ilcl.schema import parse_schema
from task_routes import optimal_actions, reach_room

SCHEMA = parse_schema(
    (Path(__file__).resolve().parent.parent / "src/ilcl/schemas/roomworld.md").read_text()
)

WORLD_ARGS = dict(n_rooms=8, n_objects=12, door_density=0.35, with_recipe=True)


def make_world(seed=1):
    return roomworld.generate(seed, **WORLD_ARGS)


def scripted_route(route):
    return ScriptedProvider({"actor_subagent": [f"<action>{a}</action>" for a in route]})


def farthest_reach_task(truth):
    reach = [t for t in truth.tasks if t.id.startswith("reach_")]
    return max(reach, key=lambda t: t.optimal_steps)


class PromptSpy:
    def __init__(self, inner):
        self.inner = inner
        self.prompts = []

    def complete(self, request):
        self.prompts.append(request.prompt)
        return self.inner.complete(request)


# -- react_episode -------------------------------------------------------------


def test_episode_succeeds_at_optimal():
    env, truth = make_world()
    task = farthest_reach_task(truth)
    route = optimal_actions(truth, env.spec.start, reach_room(truth, task.id))
    out = react_episode(env, task, scripted_route(route), step_budget=50)
    assert out.success
    assert out.steps == task.optimal_steps == len(route)
    assert len(out.transcript) == out.steps


def test_episode_budget_below_optimal_fails():
    env, truth = make_world()
    task = farthest_reach_task(truth)
    route = optimal_actions(truth, env.spec.start, reach_room(truth, task.id))
    out = react_episode(env, task, scripted_route(route), step_budget=task.optimal_steps - 1)
    assert not out.success
    assert out.reason == "step budget exhausted"
    assert out.steps == task.optimal_steps - 1


def test_episode_agent_stop_counts_as_failure():
    env, truth = make_world()
    task = truth.tasks[0]
    provider = ScriptedProvider({"actor_subagent": ["<action>stop</action>"]})
    out = react_episode(env, task, provider, step_budget=10)
    assert not out.success and out.reason == "agent stopped" and out.steps == 0


def test_episode_unusable_reply_records_reason():
    env, truth = make_world()
    out = react_episode(env, truth.tasks[0], ScriptedProvider({}), step_budget=10)
    assert not out.success
    assert out.reason.startswith("agent reply unusable")


def test_conditioning_isolation():
    """Context changes only the prompt's background block, nothing else."""
    env1, truth = make_world()
    task = farthest_reach_task(truth)
    route = optimal_actions(truth, env1.spec.start, reach_room(truth, task.id))

    bare = PromptSpy(scripted_route(route))
    plain = react_episode(env1, task, bare, step_budget=50)
    env2, _ = make_world()
    spy = PromptSpy(scripted_route(route))
    doc = parse_document(
        "#### Observations\n\n- Kitchen:\n  - objects: Nothing\n  - west: Nothing\n"
        "  - east: Nothing\n  - north: Nothing\n  - south: Nothing\n\n#### Action Rules\n",
        SCHEMA,
    )
    loaded = react_episode(env2, task, spy, context=doc, schema=SCHEMA, step_budget=50)

    assert (plain.success, plain.steps) == (loaded.success, loaded.steps)
    assert plain.condition == "without-context" and loaded.condition == "with-context"
    context_block = "\n\n" + render_document(doc, SCHEMA)
    for before, after in zip(bare.prompts, spy.prompts):
        assert after.replace(context_block, "") == before


def test_context_document_requires_schema():
    env, truth = make_world()
    with pytest.raises(ValueError):
        react_episode(env, truth.tasks[0], ScriptedProvider({}), context=Document())


# -- heuristic baseline ---------------------------------------------------------


def test_heuristic_sweeps_every_room():
    env, truth = make_world(seed=2)
    rooms = sorted(truth.locations)
    for room in rooms:
        if room == env.spec.start:
            continue
        fresh, _ = make_world(seed=2)
        task = next(t for t in truth.tasks if t.id == f"reach_{room.lower()}")
        out = react_episode(fresh, task, DepthFirstExplorer(), step_budget=400)
        assert out.success, room


def test_heuristic_is_deterministic():
    env1, truth = make_world()
    task = farthest_reach_task(truth)
    out1 = react_episode(env1, task, DepthFirstExplorer(), step_budget=400)
    env2, _ = make_world()
    out2 = react_episode(env2, task, DepthFirstExplorer(), step_budget=400)
    assert [r.action for r in out1.transcript] == [r.action for r in out2.transcript]
    assert (out1.success, out1.steps) == (out2.success, out2.steps)


# -- run_benchmark ---------------------------------------------------------------


def two_task_instance(seed=1, context=""):
    env, truth = make_world(seed)
    reach = sorted(
        (t for t in truth.tasks if t.id.startswith("reach_")),
        key=lambda t: t.optimal_steps,
    )
    tasks = [reach[0], reach[-1]]
    return (
        EvalInstance(
            id=f"roomworld-{seed}",
            make_env=lambda: make_world(seed)[0],
            tasks=tasks,
            context=context,
        ),
        truth,
        env.spec.start,
    )


def routed_factory(truth, start):
    def factory(inst, task, condition, repeat):
        if condition == "with-context":
            route = optimal_actions(truth, start, reach_room(truth, task.id))
            return scripted_route(route)
        return DepthFirstExplorer()

    return factory


def test_benchmark_shape_and_truncation():
    inst, truth, start = two_task_instance(context="the map text")
    report = run_benchmark([inst], [5, 60], routed_factory(truth, start), repeats=1)
    # 2 tasks x 2 conditions x 1 repeat x 2 budgets
    assert len(report.rows) == 8
    assert report.budgets == (5, 60)
    for row in report.rows:
        assert row.steps <= row.budget or row.success


def test_benchmark_budget_monotone():
    inst, truth, start = two_task_instance(context="map")
    report = run_benchmark([inst], [3, 10, 120], routed_factory(truth, start), repeats=1)
    by_family = {}
    for row in report.rows:
        by_family.setdefault((row.task, row.condition, row.repeat), []).append(row)
    for rows in by_family.values():
        rows.sort(key=lambda r: r.budget)
        seen_success = False
        for row in rows:
            if seen_success:
                assert row.success  # truncation never un-succeeds
            seen_success = seen_success or row.success


def test_benchmark_deterministic_reports():
    inst, truth, start = two_task_instance(context="map")
    fac = routed_factory(truth, start)
    a = render_report_csv(run_benchmark([inst], [10, 60], fac, repeats=1))
    b = render_report_csv(run_benchmark([inst], [10, 60], fac, repeats=1))
    assert a == b


# -- report math and formats -------------------------------------------------------


def hand_report():
    rows = []
    fractions = {0: (True, True), 1: (True, False), 2: (False, False)}
    for repeat, (one, two) in fractions.items():
        rows.append(BenchRow("i", "t1", 10, "c", repeat, one, 3))
        rows.append(BenchRow("i", "t2", 10, "c", repeat, two, 5))
    return BenchmarkReport(rows=rows, budgets=(10,), conditions=("c",), repeats=3)


def test_success_rate_stderr_hand_case():
    # per-repeat fractions 1.0, 0.5, 0.0: mean 0.5, sample std 0.5
    report = hand_report()
    mean, err = report.success_rate(10, "c")
    assert mean == pytest.approx(0.5)
    assert err == pytest.approx(0.5 / 3**0.5)


def test_average_steps_successful_only():
    report = hand_report()
    # successful rows: t1@3 twice, t2@5 once
    assert report.average_steps(10, "c") == pytest.approx((3 + 3 + 5) / 3)
    assert report.average_steps(10, "missing") is None


def test_report_csv_round_trip():
    report = hand_report()
    assert parse_report_csv(render_report_csv(report)) == report.rows


def test_report_md_layout():
    text = render_report_md(hand_report())
    lines = text.splitlines()
    assert lines[0] == "# Evaluation report"
    assert "## Success rate by step budget" in lines
    assert "## Average steps of successful episodes" in lines
    assert "| condition | 10 |" in lines
    assert "| c | 50.0% ± 28.9 |" in lines
    assert "| c | 3.7 |" in lines


def test_write_report_files(tmp_path):
    write_report(hand_report(), tmp_path)
    assert (tmp_path / "report.csv").read_text().startswith(
        "instance,task,budget,condition,repeat,success,steps"
    )
    assert (tmp_path / "report.md").read_text().startswith("# Evaluation report")


# -- coverage curve ------------------------------------------------------------------


def test_coverage_curve_reads_run_dir(tmp_path):
    (tmp_path / "metrics.csv").write_text(
        "iteration,env_steps_cum,unknown_count,loc_coverage,obj_coverage\n"
        "1,3,2,0.2500,0.1000\n"
        "2,7,0,1.0000,0.9000\n"
    )
    assert coverage_curve(tmp_path) == [(3, 0.25, 0.1), (7, 1.0, 0.9)]


def test_coverage_curve_missing_or_bare(tmp_path):
    assert coverage_curve(tmp_path) == []
    (tmp_path / "metrics.csv").write_text(
        "iteration,env_steps_cum,unknown_count,loc_coverage,obj_coverage\n1,3,2,,\n"
    )
    assert coverage_curve(tmp_path) == []
