"""Downstream evaluation: ReAct episodes over task batteries, plus reports.

An episode optionally carries a finished knowledge document; its rendered
text is appended verbatim to the background block of the agent prompt, so
the two conditions differ only there. Success rates across step budgets
come from truncating one full episode per cell rather than rerunning it.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .document import Document, render_document
from .envs.base import CountingEnv, Environment, TaskSpec
from .errors import ProviderError, ResponseParseError
from .explore.runner import parse_metrics_csv
from .explore.types import StepRecord, render_history
from .llm.oracle import parse_room_text
from .llm.providers import Provider, invoke
from .schema import Schema

log = logging.getLogger(__name__)

STOP_ACTION = "stop"
WITH_CONTEXT = "with-context"
WITHOUT_CONTEXT = "without-context"


@dataclass
class EpisodeOutcome:
    task_id: str
    success: bool
    steps: int
    condition: str
    transcript: list[StepRecord] = field(default_factory=list)
    reason: str = ""


@dataclass
class BenchRow:
    instance: str
    task: str
    budget: int
    condition: str
    repeat: int
    success: bool
    steps: int


@dataclass
class BenchmarkReport:
    rows: list[BenchRow]
    budgets: tuple[int, ...]
    conditions: tuple[str, ...]
    repeats: int

    def cell(self, budget: int, condition: str) -> list[BenchRow]:
        return [r for r in self.rows if r.budget == budget and r.condition == condition]

    def success_rate(self, budget: int, condition: str) -> tuple[float, float]:
        """Mean and standard error of the per-repeat success fraction."""
        per_repeat = []
        for repeat in range(self.repeats):
            hits = [r for r in self.cell(budget, condition) if r.repeat == repeat]
            if hits:
                per_repeat.append(sum(r.success for r in hits) / len(hits))
        if not per_repeat:
            return 0.0, 0.0
        mean = sum(per_repeat) / len(per_repeat)
        if len(per_repeat) < 2:
            return mean, 0.0
        var = sum((x - mean) ** 2 for x in per_repeat) / (len(per_repeat) - 1)
        return mean, math.sqrt(var / len(per_repeat))

    def average_steps(self, budget: int, condition: str) -> float | None:
        won = [r.steps for r in self.cell(budget, condition) if r.success]
        return sum(won) / len(won) if won else None


@dataclass
class EvalInstance:
    """One environment instance and its task battery.

    `context` is the rendered document text used under the with-context
    condition; `make_env` must hand back a fresh, unreset environment.
    """

    id: str
    make_env: Callable[[], Environment]
    tasks: list[TaskSpec]
    context: str = ""


def _context_text(context, schema: Schema | None) -> str:
    if context is None:
        return ""
    if isinstance(context, Document):
        if schema is None:
            raise ValueError("rendering a Document context requires the schema")
        return render_document(context, schema)
    return str(context)


def react_episode(
    env: Environment,
    task: TaskSpec,
    llm: Provider,
    context: Document | str | None = None,
    step_budget: int = 50,
    *,
    schema: Schema | None = None,
    background: str | None = None,
    condition: str = "",
    parse_retry_limit: int = 3,
) -> EpisodeOutcome:
    """One ReAct episode; returns the outcome with its full transcript."""
    base = env.background if background is None else background
    extra = _context_text(context, schema)
    if extra:
        base = f"{base}\n\n{extra}" if base else extra
    label = condition or (WITH_CONTEXT if extra else WITHOUT_CONTEXT)

    counting = CountingEnv(env)
    counting.reset()
    records: list[StepRecord] = []
    success = False
    reason = ""
    while counting.steps_used < step_budget:
        bindings = {
            "background": base,
            "task": task.goal,
            "history": render_history(records),
        }
        try:
            parsed, _raw = invoke(
                llm, "actor_subagent", bindings, parse_retries=parse_retry_limit
            )
        except (ProviderError, ResponseParseError) as exc:
            reason = f"agent reply unusable: {exc}"
            break
        action = parsed["action"].strip()
        if action.lower() == STOP_ACTION:
            reason = "agent stopped"
            break
        obs = counting.step(action)
        records.append(
            StepRecord(action=action, observation=obs, thought=parsed.get("thought"))
        )
        if task.success(env):
            success = True
            break
        if obs.terminal:
            reason = "episode ended"
            break
    if not success and not reason:
        reason = "step budget exhausted"
    return EpisodeOutcome(
        task_id=task.id,
        success=success,
        steps=counting.steps_used,
        condition=label,
        transcript=records,
        reason=reason,
    )


def run_benchmark(
    instances: list[EvalInstance],
    budgets: list[int],
    llm,
    conditions: tuple[str, ...] = (WITH_CONTEXT, WITHOUT_CONTEXT),
    repeats: int = 1,
    jobs: int = 1,
) -> BenchmarkReport:
    """Factorial evaluation: one episode per cell, truncated per budget.

    `llm` is a provider shared by every episode, or a factory called as
    llm(instance, task, condition, repeat) when fresh agents are needed.
    Episodes run in parallel only with a factory; a shared provider is a
    single consumer (cassettes play back in order), so it stays serial.
    """
    budgets = sorted(set(budgets))
    cap = max(budgets)
    factory = llm if not hasattr(llm, "complete") and callable(llm) else None
    cells = [
        (inst, task, condition, repeat)
        for inst in instances
        for task in inst.tasks
        for condition in conditions
        for repeat in range(repeats)
    ]

    def run_cell(cell) -> EpisodeOutcome:
        inst, task, condition, repeat = cell
        provider = factory(inst, task, condition, repeat) if factory else llm
        context = inst.context if condition == WITH_CONTEXT else None
        return react_episode(
            inst.make_env(),
            task,
            provider,
            context=context,
            step_budget=cap,
            condition=condition,
        )

    if jobs > 1 and factory is not None:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(run_cell, cells))
    else:
        outcomes = [run_cell(cell) for cell in cells]

    rows: list[BenchRow] = []
    for (inst, task, condition, repeat), outcome in zip(cells, outcomes):
        for budget in budgets:
            won = outcome.success and outcome.steps <= budget
            rows.append(
                BenchRow(
                    instance=inst.id,
                    task=task.id,
                    budget=budget,
                    condition=condition,
                    repeat=repeat,
                    success=won,
                    steps=outcome.steps if won else min(outcome.steps, budget),
                )
            )
    return BenchmarkReport(
        rows=rows, budgets=tuple(budgets), conditions=tuple(conditions), repeats=repeats
    )


def render_report_csv(report: BenchmarkReport) -> str:
    lines = ["instance,task,budget,condition,repeat,success,steps"]
    for r in report.rows:
        lines.append(
            f"{r.instance},{r.task},{r.budget},{r.condition},{r.repeat},"
            f"{int(r.success)},{r.steps}"
        )
    return "\n".join(lines) + "\n"


def parse_report_csv(text: str) -> list[BenchRow]:
    rows = []
    lines = text.strip().split("\n")
    for line in lines[1:]:
        inst, task, budget, condition, repeat, success, steps = line.split(",")
        rows.append(
            BenchRow(inst, task, int(budget), condition, int(repeat),
                     bool(int(success)), int(steps))
        )
    return rows


def render_report_md(report: BenchmarkReport) -> str:
    """Success-rate and average-step tables, one row per condition."""
    header = "| condition | " + " | ".join(str(b) for b in report.budgets) + " |"
    rule = "|---" * (len(report.budgets) + 1) + "|"

    out = ["# Evaluation report", ""]
    families = len({(r.instance, r.task) for r in report.rows})
    out.append(
        f"{families} task(s), {report.repeats} repeat(s), "
        f"budgets {', '.join(str(b) for b in report.budgets)}."
    )
    out += ["", "## Success rate by step budget", "", header, rule]
    for condition in report.conditions:
        cells = []
        for budget in report.budgets:
            mean, err = report.success_rate(budget, condition)
            cells.append(f"{100 * mean:.1f}% ± {100 * err:.1f}")
        out.append(f"| {condition} | " + " | ".join(cells) + " |")
    out += ["", "## Average steps of successful episodes", "", header, rule]
    for condition in report.conditions:
        cells = []
        for budget in report.budgets:
            avg = report.average_steps(budget, condition)
            cells.append("-" if avg is None else f"{avg:.1f}")
        out.append(f"| {condition} | " + " | ".join(cells) + " |")
    return "\n".join(out) + "\n"


def write_report(report: BenchmarkReport, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(render_report_csv(report))
    (out / "report.md").write_text(render_report_md(report))


def coverage_curve(run_dir) -> list[tuple[int, float, float]]:
    """(env_steps_cum, loc_coverage, obj_coverage) series from a run directory."""
    path = Path(run_dir) / "metrics.csv"
    if not path.exists():
        return []
    series = []
    for row in parse_metrics_csv(path.read_text()):
        if row.loc_coverage is not None and row.obj_coverage is not None:
            series.append((row.env_steps_cum, row.loc_coverage, row.obj_coverage))
    return series


# -- context-free baseline agent ---------------------------------------


class DepthFirstExplorer:
    """Systematic sweep of the map, used as the context-free baseline.

    Implements the completion-provider interface so episodes run through
    the same ReAct loop as every other agent; it ignores the background
    and task text entirely and walks exits depth-first, backtracking when
    a room is exhausted. Without the map it cannot aim, which is the
    point of the comparison.
    """

    ORDER = ("north", "east", "south", "west")
    REVERSE = {"north": "south", "south": "north", "east": "west", "west": "east"}

    def __init__(self):
        self.exits: dict[str, dict] = {}
        self.tried: set[tuple[str, str]] = set()
        self.trail: list[str] = []  # inverse moves leading back to the start
        self.room: str | None = None
        self.seen: set[str] = set()
        self.pending_go: str | None = None
        self.last_go: str | None = None
        self.backtracking = False

    def complete(self, request) -> str:
        history = (request.bindings or {}).get("history", "")
        return f"<action>{self._next_action(_last_observation(history))}</action>"

    def _next_action(self, obs: str | None) -> str:
        if obs is None:
            return "look"
        if self.pending_go and obs.startswith("You open"):
            direction, self.pending_go = self.pending_go, None
            self.last_go = direction
            return f"go {direction}"
        info = parse_room_text(obs)
        if info is not None:
            self._arrive(info)
        else:
            self.last_go = None
            self.pending_go = None
            self.backtracking = False
        if self.room is None:
            return "look"
        return self._pick_exit()

    def _arrive(self, info) -> None:
        if info.name not in self.seen:
            self.seen.add(info.name)
            self.exits[info.name] = dict(info.exits)
        moved = self.room is not None and info.name != self.room
        if moved and self.last_go and not self.backtracking:
            self.trail.append(self.REVERSE[self.last_go])
        self.room = info.name
        self.last_go = None
        self.backtracking = False

    def _pick_exit(self) -> str:
        room = self.room
        for direction in self.ORDER:
            if (room, direction) in self.tried or direction not in self.exits[room]:
                continue
            self.tried.add((room, direction))
            state, door = self.exits[room][direction]
            if state == "closed":
                self.pending_go = direction
                self.exits[room][direction] = ("open", door)
                return f"open {door}"
            self.last_go = direction
            return f"go {direction}"
        if self.trail:
            direction = self.trail.pop()
            self.last_go = direction
            self.backtracking = True
            return f"go {direction}"
        return "look"


def _last_observation(history: str) -> str | None:
    marker = "[Observation] "
    if marker not in history:
        return None
    return history.rsplit(marker, 1)[1]
