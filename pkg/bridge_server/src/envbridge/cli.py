"""Command-line entry point for the bridge server.

Exactly one environment source is required: ``--toy`` for the built-in
three-room world, or ``--factory module:attr`` naming a zero-argument
callable that returns a fresh environment per session. The module is
imported at startup, so anything importable on PYTHONPATH can be
served without this package depending on it.

Exit codes: 0 clean shutdown, 2 configuration error.
"""

from __future__ import annotations

import argparse
import importlib
import logging
import sys

from .server import serve
from .toy import toy_factory


def resolve_factory(spec: str):
    """Import 'module:attr' and return the named callable."""
    module_name, sep, attr = spec.partition(":")
    if not sep or not module_name or not attr:
        raise ValueError(f"bad factory {spec!r}; want module:attr")
    try:
        module = importlib.import_module(module_name)
    except ImportError as exc:
        raise ValueError(f"cannot import {module_name!r}: {exc}") from exc
    try:
        factory = getattr(module, attr)
    except AttributeError:
        raise ValueError(f"module {module_name!r} has no attribute {attr!r}") from None
    if not callable(factory):
        raise ValueError(f"{spec} is not callable")
    return factory


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="envbridge",
        description="Serve an environment over the JSON-lines bridge protocol.",
    )
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--toy", action="store_true", help="serve the built-in toy world")
    source.add_argument(
        "--factory",
        metavar="MODULE:ATTR",
        help="zero-argument callable returning a fresh environment per session",
    )
    transport = parser.add_mutually_exclusive_group()
    transport.add_argument(
        "--bind",
        default="127.0.0.1:0",
        metavar="HOST:PORT",
        help="TCP endpoint; port 0 picks a free port (announced on stderr)",
    )
    transport.add_argument(
        "--stdio", action="store_true", help="serve one session over stdin/stdout"
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log session warnings")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.ERROR,
        format="%(name)s: %(message)s",
    )
    if args.toy:
        env_factory = toy_factory
    else:
        try:
            env_factory = resolve_factory(args.factory)
        except ValueError as exc:
            print(f"envbridge: {exc}", file=sys.stderr)
            return 2
    transport = "stdio" if args.stdio else args.bind
    try:
        serve(env_factory, transport)
    except ValueError as exc:
        print(f"envbridge: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
