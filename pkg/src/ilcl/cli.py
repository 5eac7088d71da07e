"""Command-line entry points: explore, eval, render, and bridge-check.

Configuration is a JSON file naming exactly one environment and one
completion provider. Environment-variable interpolation (``${VAR}``) is
honored only inside the provider block, so secrets stay out of config
files without making the rest of a run depend on the host environment.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import random
import re
import sys
from importlib import resources
from pathlib import Path

from .envs import bridge, craftworld, roomworld
from .envs.conformance import run_conformance
from .errors import BridgeProtocolError, ProviderError
from .evaluate import (
    WITH_CONTEXT,
    WITHOUT_CONTEXT,
    DepthFirstExplorer,
    EvalInstance,
    run_benchmark,
    write_report,
)
from .explore import Budget, run_exploration
from .forest import deserialize, render_forest
from .llm.oracle import OracleProvider
from .llm.providers import HTTPProvider, ScriptedProvider
from .schema import load_schema, parse_schema

log = logging.getLogger(__name__)

BUILTIN_ENVS = {"roomworld": roomworld.generate, "craftworld": craftworld.generate}
PROVIDER_KINDS = ("oracle", "cassette", "http", "heuristic")
_ENV_VAR = re.compile(r"\$\{(\w+)\}")


class ConfigError(Exception):
    """Configuration problem; maps to exit code 2."""


def _interpolate(value, where: str):
    """Replace ${VAR} from the environment; only the provider block uses this."""
    if isinstance(value, dict):
        return {k: _interpolate(v, where) for k, v in value.items()}
    if isinstance(value, list):
        return [_interpolate(v, where) for v in value]
    if isinstance(value, str):

        def sub(match):
            name = match.group(1)
            if name not in os.environ:
                raise ConfigError(f"{where} references ${{{name}}} but it is not set")
            return os.environ[name]

        return _ENV_VAR.sub(sub, value)
    return value


def load_config(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        config = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {p}: {exc}") from exc
    if not isinstance(config, dict):
        raise ConfigError("config root must be a JSON object")
    validate_config(config)
    config["provider"] = _interpolate(config["provider"], "provider")
    return config


def validate_config(config: dict) -> None:
    env = config.get("env")
    if not isinstance(env, dict):
        raise ConfigError("config needs an 'env' object")
    picks = [k for k in ("name", "bridge") if k in env]
    if len(picks) != 1:
        raise ConfigError("env must name exactly one of a builtin ('name') or a 'bridge' endpoint")
    if "name" in env and env["name"] not in BUILTIN_ENVS:
        raise ConfigError(
            f"unknown builtin env {env['name']!r}; choices: {', '.join(sorted(BUILTIN_ENVS))}"
        )
    provider = config.get("provider")
    if not isinstance(provider, dict) or provider.get("kind") not in PROVIDER_KINDS:
        raise ConfigError(f"provider.kind must be one of: {', '.join(PROVIDER_KINDS)}")
    budget = config.get("budget", {})
    if not isinstance(budget, dict):
        raise ConfigError("'budget' must be an object")
    for key, value in budget.items():
        if not isinstance(value, int) or value <= 0:
            raise ConfigError(f"budget.{key} must be a positive integer")
    if config.get("mode", "action") not in ("action", "agent"):
        raise ConfigError("mode must be 'action' or 'agent'")


def resolve_schema(spec: str | None, default: str):
    """A builtin schema name or a path to a schema file."""
    name = spec or default
    path = Path(name)
    if path.suffix == ".md" or "/" in name:
        if not path.is_file():
            raise ConfigError(f"schema file not found: {path}")
        return load_schema(path)
    try:
        text = (resources.files("ilcl") / "schemas" / f"{name}.md").read_text()
    except FileNotFoundError:
        raise ConfigError(f"no builtin schema named {name!r}") from None
    return parse_schema(text, source_name=name)


def make_env(config: dict):
    """Returns (env, truth, default_schema_id, instance_id)."""
    env_spec = config["env"]
    if "bridge" in env_spec:
        try:
            env = bridge.connect(env_spec["bridge"])
        except (OSError, BridgeProtocolError) as exc:
            raise RuntimeError(f"cannot reach bridge {env_spec['bridge']}: {exc}") from exc
        return env, None, env.schema_id, env_spec.get("instance_id", env.name)
    name = env_spec["name"]
    seed = int(env_spec.get("seed", 0))
    params = env_spec.get("params", {})
    try:
        env, truth = BUILTIN_ENVS[name](seed, **params)
    except TypeError as exc:
        raise ConfigError(f"bad params for env {name!r}: {exc}") from exc
    return env, truth, env.schema_id, env_spec.get("instance_id", f"{name}-{seed}")


def make_provider(spec: dict, schema):
    kind = spec["kind"]
    if kind == "oracle":
        return OracleProvider(schema)
    if kind == "cassette":
        path = Path(spec.get("path", ""))
        if not path.is_file():
            raise ConfigError(f"cassette file not found: {path}")
        return ScriptedProvider.from_cassette(path, check_digest=spec.get("strict", False))
    if kind == "http":
        return HTTPProvider(
            base_url=spec["base_url"],
            model=spec.get("model", ""),
            api_key=spec.get("api_key"),
        )
    return None  # heuristic: episodes build their own agents


def make_budget(config: dict) -> Budget:
    return Budget(**config.get("budget", {}))


def _claim_out_dir(out: Path, force: bool, expected: tuple[str, ...]) -> None:
    if out.exists() and any(out.iterdir()):
        if not force:
            raise ConfigError(f"output directory {out} is not empty (use --force to overwrite)")
        for name in expected:
            target = out / name
            if target.is_file():
                target.unlink()
    out.mkdir(parents=True, exist_ok=True)


def cmd_explore(args) -> int:
    config = load_config(args.config)
    out = Path(args.out)
    _claim_out_dir(
        out, args.force, ("document.md", "forest.json", "metrics.csv", "run.json")
    )
    env, truth, schema_id, instance_id = make_env(config)
    schema = resolve_schema(config.get("schema"), schema_id)
    provider = make_provider(config["provider"], schema)
    if provider is None:
        raise ConfigError("provider.kind 'heuristic' only applies to eval")
    if "seed" in config:
        random.seed(config["seed"])
    use_checkpoints = env.capabilities().snapshot_restore
    result = run_exploration(
        env,
        schema,
        provider,
        make_budget(config),
        mode=config.get("mode", "action"),
        instance_id=instance_id,
        background=env.background,
        truth=truth,
        out_dir=out,
        use_checkpoints=use_checkpoints,
    )
    print(
        f"{instance_id}: {result.stop_reason} after {result.iterations} iteration(s), "
        f"{result.steps_used} env step(s); artifacts in {out}"
    )
    return 0


def cmd_eval(args) -> int:
    config = load_config(args.config)
    if "bridge" in config["env"]:
        raise ConfigError("eval needs a builtin env; tasks come from its generator")
    context_text = ""
    conditions: tuple[str, ...] = (WITHOUT_CONTEXT,)
    if args.context is not None:
        doc_path = Path(args.context)
        if not doc_path.is_file():
            raise ConfigError(f"context document not found: {doc_path}")
        context_text = doc_path.read_text()
        conditions = (WITH_CONTEXT, WITHOUT_CONTEXT)

    env, truth, schema_id, instance_id = make_env(config)
    schema = resolve_schema(config.get("schema"), schema_id)
    eval_spec = config.get("eval", {})
    budgets = eval_spec.get("budgets", [50])
    if not budgets or any(not isinstance(b, int) or b <= 0 for b in budgets):
        raise ConfigError("eval.budgets must be positive integers")
    repeats = int(eval_spec.get("repeats", 1))
    task_filter = set(eval_spec.get("tasks", []))
    tasks = [t for t in truth.tasks if not task_filter or t.id in task_filter]
    if not tasks:
        raise ConfigError("no tasks selected for evaluation")

    env_spec = config["env"]
    name, seed, params = env_spec["name"], int(env_spec.get("seed", 0)), env_spec.get("params", {})
    instance = EvalInstance(
        id=instance_id,
        make_env=lambda: BUILTIN_ENVS[name](seed, **params)[0],
        tasks=tasks,
        context=context_text,
    )
    provider = make_provider(config["provider"], schema)
    if provider is None:
        agent = lambda inst, task, condition, repeat: DepthFirstExplorer()  # noqa: E731
    else:
        agent = provider

    out = Path(eval_spec.get("out", "eval-out"))
    _claim_out_dir(out, getattr(args, "force", False), ("report.csv", "report.md"))
    report = run_benchmark(
        [instance], budgets, agent, conditions=conditions, repeats=repeats, jobs=args.jobs
    )
    write_report(report, out)
    cells = len(tasks) * len(conditions) * repeats
    print(f"{instance_id}: {cells} episode(s) over budgets {budgets}; report in {out}")
    return 0


def cmd_render(args) -> int:
    run_dir = Path(args.run_dir)
    if not run_dir.is_dir():
        raise ConfigError(f"run directory not found: {run_dir}")
    sources = {
        "forest": "forest.json",
        "document": "document.md",
        "metrics": "metrics.csv",
    }
    path = run_dir / sources[args.what]
    if not path.is_file():
        raise ConfigError(f"no {sources[args.what]} in {run_dir}")
    if args.what == "forest":
        sys.stdout.write(render_forest(deserialize(path.read_bytes())))
    else:
        sys.stdout.write(path.read_text())
    return 0


def cmd_bridge_check(args) -> int:
    results = run_conformance(args.endpoint, timeout=args.timeout)
    failures = 0
    for result in results:
        mark = "PASS" if result.passed else "FAIL"
        detail = f": {result.detail}" if (result.detail and not result.passed) else ""
        print(f"{mark} {result.scenario}{detail}")
        failures += 0 if result.passed else 1
    print(f"{len(results) - failures}/{len(results)} scenarios passed")
    return 0 if failures == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ilcl",
        description="Explore environment instances and evaluate agents on the result.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("explore", help="build a context document for one instance")
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--out", required=True, help="artifact output directory")
    p.add_argument("--force", action="store_true", help="overwrite existing artifacts")
    p.set_defaults(fn=cmd_explore)

    p = sub.add_parser("eval", help="run the downstream task battery")
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--context", help="context document to condition on")
    p.add_argument("--jobs", type=int, default=1, help="parallel episodes")
    p.add_argument("--force", action="store_true", help="overwrite existing reports")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("render", help="print a run artifact in text form")
    p.add_argument("run_dir", help="exploration output directory")
    p.add_argument("--what", required=True, choices=("forest", "document", "metrics"))
    p.set_defaults(fn=cmd_render)

    p = sub.add_parser("bridge-check", help="run protocol conformance scenarios")
    p.add_argument("--endpoint", required=True, help="host:port of the bridge server")
    p.add_argument("--timeout", type=float, default=10.0)
    p.set_defaults(fn=cmd_bridge_check)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("ILCL_LOG", "WARNING"))
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ProviderError, BridgeProtocolError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
