"""Acceptance: conformance over live servers, and engine parity through the bridge.

The engine is exercised strictly through its command line. A served
environment must pass every conformance scenario, and an exploration
run over the bridge must produce the same document, byte for byte, as
the in-process run on the same seeded environment.
"""

import json
import os
import re
import shutil
import socket
import subprocess
import sys
from pathlib import Path

import pytest

WORLD_PARAMS = {"n_rooms": 8, "n_objects": 12, "door_density": 0.35, "with_recipe": True}
SEED = 3

FACTORY_SRC = f"""\
from ilcl.envs import roomworld


def make():
    return roomworld.generate({SEED}, **{WORLD_PARAMS!r})[0]
"""


def ilcl_cmd() -> list:
    exe = shutil.which("ilcl")
    return [exe] if exe else [sys.executable, "-m", "ilcl.cli"]


def start_server(args, env=None):
    proc = subprocess.Popen(
        [sys.executable, "-m", "envbridge", *args],
        stdout=subprocess.DEVNULL,
        stderr=subprocess.PIPE,
        text=True,
        env=env,
    )
    line = proc.stderr.readline()
    match = re.search(r"listening on (\S+)", line)
    if not match:
        proc.terminate()
        raise RuntimeError(f"server did not announce an endpoint: {line!r}")
    return proc, match.group(1)


def stop_server(proc) -> None:
    proc.terminate()
    try:
        proc.wait(timeout=5)
    except subprocess.TimeoutExpired:
        proc.kill()


def roomworld_server(tmp_path):
    """A server whose sessions run the engine's own room generator."""
    (tmp_path / "rwfactory.py").write_text(FACTORY_SRC)
    env = dict(os.environ)
    env["PYTHONPATH"] = str(tmp_path) + os.pathsep + env.get("PYTHONPATH", "")
    return start_server(["--factory", "rwfactory:make"], env=env)


def run_bridge_check(endpoint: str) -> str:
    result = subprocess.run(
        [*ilcl_cmd(), "bridge-check", "--endpoint", endpoint],
        capture_output=True,
        text=True,
        timeout=300,
    )
    assert result.returncode == 0, f"bridge-check failed:\n{result.stdout}{result.stderr}"
    assert "12/12 scenarios passed" in result.stdout, result.stdout
    assert result.stdout.count("PASS") == 12, result.stdout
    return result.stdout


def read_caps(endpoint: str) -> dict:
    host, _, port = endpoint.rpartition(":")
    with socket.create_connection((host, int(port)), timeout=5) as sock:
        sock.settimeout(5)
        sock.sendall(b'{"t":"hello","proto":1}\n')
        return json.loads(sock.makefile("rb").readline())


def test_conformance_toy_server():
    proc, endpoint = start_server(["--toy"])
    try:
        # Not skipped: the toy really advertises (deepcopy) snapshots.
        assert read_caps(endpoint)["snapshot_restore"] is True
        output = run_bridge_check(endpoint)
        assert "PASS snapshot_law_replay" in output
    finally:
        stop_server(proc)
    print("bridge-check vs toy server: 12/12 scenarios PASS")


def test_conformance_roomworld_server(tmp_path):
    proc, endpoint = roomworld_server(tmp_path)
    try:
        run_bridge_check(endpoint)
    finally:
        stop_server(proc)
    print("bridge-check vs served room generator: 12/12 scenarios PASS")


def explore(config: dict, out_dir: Path, tmp_path: Path) -> None:
    config_path = tmp_path / f"{out_dir.name}.json"
    config_path.write_text(json.dumps(config, indent=2))
    result = subprocess.run(
        [*ilcl_cmd(), "explore", "--config", str(config_path), "--out", str(out_dir)],
        capture_output=True,
        text=True,
        timeout=300,
    )
    assert result.returncode == 0, f"explore failed:\n{result.stdout}{result.stderr}"


def test_exploration_over_bridge_matches_in_process_document(tmp_path):
    base = {"provider": {"kind": "oracle"}, "seed": 7}
    local = dict(base)
    local["env"] = {
        "name": "roomworld",
        "seed": SEED,
        "params": WORLD_PARAMS,
        "instance_id": "parity",
    }
    explore(local, tmp_path / "local", tmp_path)

    proc, endpoint = roomworld_server(tmp_path)
    try:
        bridged = dict(base)
        bridged["env"] = {"bridge": endpoint, "instance_id": "parity"}
        explore(bridged, tmp_path / "bridged", tmp_path)
    finally:
        stop_server(proc)

    local_doc = (tmp_path / "local" / "document.md").read_bytes()
    bridged_doc = (tmp_path / "bridged" / "document.md").read_bytes()
    assert local_doc == bridged_doc
    print("document built over the bridge is byte-identical to the in-process run")
