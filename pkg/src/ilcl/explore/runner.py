"""The outer plan-act-extract loop plus run artifact writing."""

from __future__ import annotations

import csv
import io
import json
import logging
from pathlib import Path

from ..document import Document, coverage_against, list_gaps, render_document
from ..envs.base import CountingEnv, Environment
from ..forest import new_forest, open_todos, serialize
from ..llm.providers import Provider
from ..schema import Schema
from . import extractor, planner
from .actor import PathExecutor, rule_key_result
from .types import Budget, ExplorationResult, IterationMetrics, Trajectory, render_trajectory

log = logging.getLogger(__name__)

# Per-iteration caps so a stuck planner can't spin without spending steps.
OBS_PROPOSAL_CAP = 16
PROMOTION_CAP = 8


def run_exploration(
    env: Environment,
    schema: Schema,
    llm: Provider,
    budget: Budget,
    *,
    background: str = "",
    mode: str = "action",
    instance_id: str = "",
    truth=None,
    out_dir: str | Path | None = None,
    use_checkpoints: bool = True,
) -> ExplorationResult:
    """Explore until gaps close or budgets run out; optionally write artifacts.

    `truth` is only ever consulted for coverage metrics. It is never
    rendered into a prompt.
    """
    counting = env if isinstance(env, CountingEnv) else CountingEnv(env)
    first = counting.reset()
    forest = new_forest(rule_key_result("start", first), mode=mode)
    executor = PathExecutor(
        counting,
        forest,
        budget,
        llm=llm,
        mode=mode,
        background=background,
        use_checkpoints=use_checkpoints,
    )
    executor.mark_initial_state()

    doc = Document()
    doc.meta.instance_id = instance_id
    metrics: list[IterationMetrics] = []
    trajectories: list[Trajectory] = []
    stop_reason = "budget-exhausted"
    iteration = 0

    while True:
        iteration += 1
        recent = render_trajectory(trajectories[-1]) if trajectories else None

        for _ in range(OBS_PROPOSAL_CAP):
            if planner.propose_observation_todo(
                llm, doc, schema, forest, budget, background, recent
            ) is None:
                break
        planner.propose_rule_todos(llm, doc, schema, forest, budget, background, recent)

        for path in open_todos(forest):
            if counting.steps_used >= budget.max_env_steps:
                break
            traj = executor.execute_path(path)
            trajectories.append(traj)
            if traj.records:
                doc = _extract_from(llm, doc, schema, traj, background, budget)

        for _ in range(PROMOTION_CAP):
            if not planner.has_promotable_node(forest):
                break
            if planner.propose_promotion(llm, doc, schema, forest, budget, background) is None:
                break

        doc.meta.env_steps_consumed = counting.steps_used
        doc.meta.iteration = iteration
        metrics.append(_measure(doc, schema, iteration, counting.steps_used, truth))

        decision = planner.should_continue(
            llm, doc, schema, forest, budget, counting.steps_used, iteration
        )
        if not decision.go_on:
            stop_reason = decision.reason
            break

    result = ExplorationResult(
        document=doc,
        forest=forest,
        steps_used=counting.steps_used,
        iterations=iteration,
        metrics=metrics,
        stop_reason=stop_reason,
        trajectories=trajectories,
    )
    if out_dir is not None:
        write_artifacts(result, schema, Path(out_dir))
    return result


def _extract_from(
    llm: Provider,
    doc: Document,
    schema: Schema,
    traj: Trajectory,
    background: str,
    budget: Budget,
) -> Document:
    """Run both edit pipelines over one trajectory."""
    text = render_trajectory(traj)
    for section in ("observations", "action_rules"):
        edits = extractor.extract_edits(
            llm, doc, schema, text, section, background, budget, evidence=traj.id
        )
        for edit in edits:
            extractor.check_edit(llm, edit, doc, schema, text, background, budget)
        doc = extractor.apply_edits(llm, doc, schema, edits, budget)
    return doc


def _measure(doc, schema, iteration, steps, truth) -> IterationMetrics:
    m = IterationMetrics(
        iteration=iteration,
        env_steps_cum=steps,
        unknown_count=len(list_gaps(doc, schema)),
    )
    if truth is not None:
        report = coverage_against(doc, truth)
        m.loc_coverage = report.locations_fraction
        m.obj_coverage = report.objects_fraction
    return m


# -- artifacts -------------------------------------------------------------


def write_artifacts(result: ExplorationResult, schema: Schema, out_dir: Path) -> None:
    """document.md, forest.json, metrics.csv, run.json, trajectories/."""
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "document.md").write_bytes(
        render_document(result.document, schema).encode("utf-8")
    )
    (out_dir / "forest.json").write_bytes(serialize(result.forest))
    (out_dir / "metrics.csv").write_bytes(render_metrics_csv(result.metrics).encode("utf-8"))
    run_info = {
        "instance_id": result.document.meta.instance_id,
        "iterations": result.iterations,
        "steps_used": result.steps_used,
        "stop_reason": result.stop_reason,
        "trajectories": len(result.trajectories),
    }
    (out_dir / "run.json").write_bytes(
        (json.dumps(run_info, indent=1, sort_keys=True) + "\n").encode("utf-8")
    )
    traj_dir = out_dir / "trajectories"
    traj_dir.mkdir(exist_ok=True)
    for traj in result.trajectories:
        (traj_dir / f"{traj.id}.json").write_bytes(
            (json.dumps(trajectory_to_dict(traj), indent=1, sort_keys=True) + "\n").encode(
                "utf-8"
            )
        )


def render_metrics_csv(metrics: list[IterationMetrics]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["iteration", "env_steps_cum", "unknown_count", "loc_coverage", "obj_coverage"]
    )
    for m in metrics:
        writer.writerow(
            [
                m.iteration,
                m.env_steps_cum,
                m.unknown_count,
                "" if m.loc_coverage is None else f"{m.loc_coverage:.4f}",
                "" if m.obj_coverage is None else f"{m.obj_coverage:.4f}",
            ]
        )
    return buf.getvalue()


def trajectory_to_dict(traj: Trajectory) -> dict:
    return {
        "id": traj.id,
        "mode": traj.mode,
        "origin_path": {
            "state": traj.origin_path.start_state,
            "steps": list(traj.origin_path.steps),
        },
        "start_summary": traj.start_summary,
        "replayed_prefix_len": traj.replayed_prefix_len,
        "prior_labels": list(traj.prior_labels),
        "truncated": traj.truncated,
        "records": [
            {
                "action": r.action,
                "thought": r.thought,
                "observation": {
                    "text": r.observation.text,
                    "score_delta": r.observation.score_delta,
                    "terminal": r.observation.terminal,
                },
                "key_result": r.key_result,
            }
            for r in traj.records
        ],
    }


def parse_metrics_csv(text: str) -> list[IterationMetrics]:
    """Inverse of render_metrics_csv, for report tooling."""
    rows: list[IterationMetrics] = []
    for row in csv.DictReader(io.StringIO(text)):
        rows.append(
            IterationMetrics(
                iteration=int(row["iteration"]),
                env_steps_cum=int(row["env_steps_cum"]),
                unknown_count=int(row["unknown_count"]),
                loc_coverage=float(row["loc_coverage"]) if row["loc_coverage"] else None,
                obj_coverage=float(row["obj_coverage"]) if row["obj_coverage"] else None,
            )
        )
    return rows
