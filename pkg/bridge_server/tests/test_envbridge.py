"""Server-side protocol checks driven through a bare stdlib client."""

import json
import socket
import subprocess
import sys
import threading
from contextlib import contextmanager
from pathlib import Path
from types import SimpleNamespace

import pytest

from envbridge import (
    BridgeServer,
    Session,
    TextWorldAdapter,
    ToyRooms,
    toy_factory,
    wrap_textworld_like,
)
from envbridge.server import caps_payload, pick_snapshot_mode

FIXTURE = Path(__file__).resolve().parents[2] / "protocol" / "conformance.json"

SCENARIO_IDS = [
    "handshake_caps",
    "reset_returns_obs",
    "step_returns_obs",
    "failed_action_is_obs",
    "determinism_across_resets",
    "unknown_type_unsupported",
    "bad_json_keeps_session",
    "step_before_reset_err",
    "snapshot_capability_respected",
    "restore_unknown_id_err",
    "snapshot_law_replay",
    "close_ends_session",
]


class Client:
    """Minimal JSON-lines client for poking a server directly."""

    def __init__(self, port: int):
        self.sock = socket.create_connection(("127.0.0.1", port), timeout=5)
        self.sock.settimeout(5)
        self.reader = self.sock.makefile("rb")
        self.writer = self.sock.makefile("wb")

    def send_raw(self, line: str) -> None:
        self.writer.write(line.encode("utf-8") + b"\n")
        self.writer.flush()

    def recv(self):
        line = self.reader.readline()
        return json.loads(line) if line else None

    def rpc(self, message: dict):
        self.send_raw(json.dumps(message))
        return self.recv()

    def hello(self) -> dict:
        return self.rpc({"t": "hello", "proto": 1})

    def close(self) -> None:
        self.sock.close()


@contextmanager
def serving(env_factory):
    server = BridgeServer(env_factory)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield server.server_address[1]
    finally:
        server.shutdown()
        server.server_close()


@pytest.fixture(scope="module")
def toy_port():
    with serving(toy_factory) as port:
        yield port


@contextmanager
def toy_client(port):
    client = Client(port)
    try:
        yield client
    finally:
        client.close()


def test_fixture_lists_the_scenarios_this_suite_covers():
    fixture = json.loads(FIXTURE.read_text())
    assert fixture["proto"] == 1
    assert [s["id"] for s in fixture["scenarios"]] == SCENARIO_IDS


def test_handshake_caps(toy_port):
    with toy_client(toy_port) as client:
        caps = client.hello()
        assert caps["t"] == "caps"
        assert caps["proto"] == 1
        assert caps["snapshot_restore"] is True
        assert caps["deterministic"] is True
        assert caps["name"] == "toyrooms"
        assert "schema_id" not in caps  # toy declares none; key must stay absent
        assert caps["background"].startswith("A tiny house")


def test_reset_and_step_return_obs(toy_port):
    with toy_client(toy_port) as client:
        client.hello()
        obs = client.rpc({"t": "reset"})
        assert obs == {
            "t": "obs",
            "text": "A creaky porch. The hallway lies to the east.",
            "terminal": False,
            "score_delta": 0,
        }
        obs = client.rpc({"t": "step", "action": "go east"})
        assert obs["t"] == "obs" and "brass lamp" in obs["text"]
        failed = client.rpc({"t": "step", "action": "zzz unparseable action zzz"})
        assert failed["t"] == "obs" and failed["text"] == "That doesn't work here."


def test_score_delta_terminal_and_post_episode_containment(toy_port):
    with toy_client(toy_port) as client:
        client.hello()
        client.rpc({"t": "reset"})
        client.rpc({"t": "step", "action": "go east"})
        took = client.rpc({"t": "step", "action": "take lamp"})
        assert took["score_delta"] == 1 and took["terminal"] is False
        won = client.rpc({"t": "step", "action": "go east"})
        assert won["terminal"] is True and won["score_delta"] == 1
        assert "You win!" in won["text"]
        # The toy refuses to step a finished episode; the server contains it.
        after = client.rpc({"t": "step", "action": "look"})
        assert after == {"t": "err", "code": "env_error"}
        assert client.rpc({"t": "reset"})["t"] == "obs"


def test_step_before_reset(toy_port):
    with toy_client(toy_port) as client:
        client.hello()
        assert client.rpc({"t": "step", "action": "look"}) == {"t": "err", "code": "no_episode"}
        assert client.rpc({"t": "reset"})["t"] == "obs"


def test_unknown_type_and_bad_requests(toy_port):
    with toy_client(toy_port) as client:
        client.hello()
        assert client.rpc({"t": "bogus"}) == {"t": "err", "code": "unsupported"}
        client.send_raw("{this is not json")
        assert client.recv() == {"t": "err", "code": "bad_json"}
        assert client.rpc([1, 2, 3]) == {"t": "err", "code": "bad_json"}
        assert client.rpc({"text": "no type"}) == {"t": "err", "code": "bad_json"}
        client.rpc({"t": "reset"})
        assert client.rpc({"t": "step"}) == {"t": "err", "code": "bad_request"}
        assert client.rpc({"t": "step", "action": "look"})["t"] == "obs"


def test_snapshot_law_rewinds_real_state(toy_port):
    with toy_client(toy_port) as client:
        client.hello()
        client.rpc({"t": "reset"})
        client.rpc({"t": "step", "action": "go east"})
        client.rpc({"t": "step", "action": "take lamp"})
        snap = client.rpc({"t": "snapshot"})
        assert snap["t"] == "snap" and isinstance(snap["id"], str)
        won = client.rpc({"t": "step", "action": "go east"})
        assert won["terminal"] is True
        assert client.rpc({"t": "restore", "id": snap["id"]}) == {"t": "ok"}
        again = client.rpc({"t": "step", "action": "go east"})
        assert again == won
        # Same snapshot restores any number of times, back to mid-episode.
        assert client.rpc({"t": "restore", "id": snap["id"]}) == {"t": "ok"}
        look = client.rpc({"t": "step", "action": "look"})
        assert "hallway" in look["text"] and "lamp sits" not in look["text"]
        inventory = client.rpc({"t": "step", "action": "inventory"})
        assert inventory["text"] == "You carry a lamp."


def test_restore_unknown_id(toy_port):
    with toy_client(toy_port) as client:
        client.hello()
        client.rpc({"t": "reset"})
        reply = client.rpc({"t": "restore", "id": "no-such-snapshot"})
        assert reply == {"t": "err", "code": "unknown_snapshot"}
        assert client.rpc({"t": "reset"})["t"] == "obs"


def test_close_ends_session(toy_port):
    client = Client(toy_port)
    client.hello()
    client.send_raw(json.dumps({"t": "close"}))
    assert client.recv() is None
    client.close()


class PlainEnv:
    """No snapshots, no copyable flag, bare-string observations."""

    name = "plain"

    def reset(self):
        return "a plain room"

    def step(self, action):
        return {"text": f"did {action}", "terminal": False, "score_delta": 0}


def test_uncopyable_env_reports_no_snapshots():
    with serving(PlainEnv) as port:
        client = Client(port)
        try:
            caps = client.hello()
            assert caps["snapshot_restore"] is False
            assert "schema_id" not in caps and "background" not in caps
            obs = client.rpc({"t": "reset"})
            assert obs == {"t": "obs", "text": "a plain room", "terminal": False, "score_delta": 0}
            assert client.rpc({"t": "snapshot"}) == {"t": "err", "code": "unsupported"}
            assert client.rpc({"t": "restore", "id": "s1"}) == {"t": "err", "code": "unsupported"}
        finally:
            client.close()


class NativeSnapshotEnv:
    """Counts steps; snapshots through its own id namespace."""

    name = "counter"

    def __init__(self):
        self.n = 0
        self.saved = {}

    def reset(self):
        self.n = 0
        return f"n={self.n}"

    def step(self, action):
        self.n += 1
        return f"n={self.n}"

    def snapshot(self):
        native_id = f"native-{len(self.saved)}"
        self.saved[native_id] = self.n
        return native_id

    def restore(self, native_id):
        self.n = self.saved[native_id]


def test_native_snapshots_pass_through_with_server_ids():
    with serving(NativeSnapshotEnv) as port:
        client = Client(port)
        try:
            assert client.hello()["snapshot_restore"] is True
            client.rpc({"t": "reset"})
            client.rpc({"t": "step", "action": "tick"})
            snap = client.rpc({"t": "snapshot"})
            assert snap["id"] == "s1"  # the env's own ids never reach the wire
            client.rpc({"t": "step", "action": "tick"})
            assert client.rpc({"t": "restore", "id": snap["id"]}) == {"t": "ok"}
            assert client.rpc({"t": "step", "action": "tick"})["text"] == "n=2"
            reply = client.rpc({"t": "restore", "id": "native-0"})
            assert reply == {"t": "err", "code": "unknown_snapshot"}
        finally:
            client.close()


class CrashyEnv:
    name = "crashy"

    def reset(self):
        return "standing by"

    def step(self, action):
        raise RuntimeError("boom")


def test_env_crash_is_contained():
    with serving(CrashyEnv) as port:
        client = Client(port)
        try:
            client.hello()
            client.rpc({"t": "reset"})
            assert client.rpc({"t": "step", "action": "go"}) == {"t": "err", "code": "env_error"}
            assert client.rpc({"t": "reset"})["t"] == "obs"
        finally:
            client.close()
        second = Client(port)  # the server itself survived
        try:
            assert second.hello()["t"] == "caps"
        finally:
            second.close()


def test_sessions_on_a_shared_env_track_their_own_episodes():
    factory = wrap_textworld_like(ToyRooms())
    with serving(factory) as port:
        first = Client(port)
        try:
            first.hello()
            first.rpc({"t": "reset"})
            first.rpc({"t": "step", "action": "go east"})
        finally:
            first.close()
        second = Client(port)
        try:
            second.hello()
            reply = second.rpc({"t": "step", "action": "look"})
            assert reply == {"t": "err", "code": "no_episode"}
            obs = second.rpc({"t": "reset"})
            assert obs["text"].startswith("A creaky porch")
        finally:
            second.close()


def test_adapter_handles_reset_and_step_shapes():
    class Shapes:
        def __init__(self, reset_value):
            self.reset_value = reset_value
            self.scores = iter([2, 2, 5])

        def reset(self):
            return self.reset_value

        def step(self, action):
            return (f"after {action}", next(self.scores), False, {"feedback": ""})

    for reset_value in ("opening", ("opening",), ("opening", {"infos": 1})):
        adapter = TextWorldAdapter(Shapes(reset_value))
        assert adapter.reset() == {"text": "opening", "terminal": False, "score_delta": 0}
    adapter = TextWorldAdapter(Shapes("opening"))
    adapter.reset()
    deltas = [adapter.step("a")["score_delta"] for _ in range(3)]
    assert deltas == [2, 0, 3]  # cumulative scores become per-step deltas

    class ThreeTuple:
        def reset(self):
            return "hi"

        def step(self, action):
            return ("done", 1, True)

    adapter = TextWorldAdapter(ThreeTuple())
    adapter.reset()
    assert adapter.step("x") == {"text": "done", "terminal": True, "score_delta": 1}

    class Broken:
        def reset(self):
            return "hi"

        def step(self, action):
            return "just a string"

    adapter = TextWorldAdapter(Broken())
    adapter.reset()
    with pytest.raises(ValueError):
        adapter.step("x")


def test_declared_capabilities_win_over_methods():
    class DeclaredOff(NativeSnapshotEnv):
        def capabilities(self):
            return SimpleNamespace(
                snapshot_restore=False, deterministic=False, action_inventory=("go", "look")
            )

        def fingerprint(self):
            return "abc123"

    env = DeclaredOff()
    assert pick_snapshot_mode(env) is None
    caps = caps_payload(env, pick_snapshot_mode(env))
    assert caps["snapshot_restore"] is False
    assert caps["deterministic"] is False
    assert caps["action_inventory"] == ["go", "look"]
    assert caps["fingerprint"] == "abc123"


def test_session_handles_lines_without_a_transport():
    session = Session(toy_factory())
    assert session.handle_line(b'{"t":"hello","proto":1}')["t"] == "caps"
    assert session.handle_line(b"\xff\xfe garbage")["code"] == "bad_json"
    assert session.handle_line(b'{"t":"reset"}')["t"] == "obs"


def test_stdio_transport_serves_one_session():
    proc = subprocess.Popen(
        [sys.executable, "-m", "envbridge", "--toy", "--stdio"],
        stdin=subprocess.PIPE,
        stdout=subprocess.PIPE,
        text=False,
    )
    try:
        for message in ({"t": "hello", "proto": 1}, {"t": "reset"}):
            proc.stdin.write(json.dumps(message).encode() + b"\n")
        proc.stdin.flush()
        caps = json.loads(proc.stdout.readline())
        assert caps["t"] == "caps" and caps["name"] == "toyrooms"
        assert json.loads(proc.stdout.readline())["t"] == "obs"
        proc.stdin.write(b'{"t":"close"}\n')
        proc.stdin.flush()
        assert proc.stdout.readline() == b""
        assert proc.wait(timeout=10) == 0
    finally:
        if proc.poll() is None:
            proc.kill()


def test_cli_rejects_bad_factories():
    bad = subprocess.run(
        [sys.executable, "-m", "envbridge", "--factory", "no_such_module:make"],
        capture_output=True,
        text=True,
        timeout=30,
    )
    assert bad.returncode == 2 and "cannot import" in bad.stderr
    malformed = subprocess.run(
        [sys.executable, "-m", "envbridge", "--factory", "missing-colon"],
        capture_output=True,
        text=True,
        timeout=30,
    )
    assert malformed.returncode == 2 and "module:attr" in malformed.stderr
