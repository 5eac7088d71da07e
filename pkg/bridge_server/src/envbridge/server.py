"""Serve environments over the newline-delimited JSON bridge protocol.

One connection carries one session. The session owns a private
environment built by the factory it was given, answers every request
line with exactly one reply line, and contains environment crashes:
an exception from the wrapped environment becomes an ``err`` reply,
never a dead server.

The wire contract (proto 1): the client opens with
``{"t": "hello", "proto": 1}`` and gets a ``caps`` reply; ``reset``
and ``step`` reply with ``obs``; ``snapshot`` replies ``snap`` with an
id and ``restore`` acknowledges with ``ok``; ``close`` ends the stream
with no reply. Anything the server cannot honor gets
``{"t": "err", "code": ...}`` and the session keeps going.
"""

from __future__ import annotations

import copy
import json
import logging
import socketserver
import sys

log = logging.getLogger("envbridge")

PROTO_VERSION = 1

# Error codes a session can emit. Only "unsupported" is load-bearing
# for clients; the rest are diagnostics.
BAD_JSON = "bad_json"
BAD_REQUEST = "bad_request"
NO_EPISODE = "no_episode"
UNKNOWN_SNAPSHOT = "unknown_snapshot"
UNSUPPORTED = "unsupported"
ENV_ERROR = "env_error"

_CLOSE = object()  # sentinel: end the session without replying


def _err(code: str) -> dict:
    return {"t": "err", "code": code}


def _declared_capabilities(env):
    """The env's capabilities object, or None if it doesn't publish one."""
    probe = getattr(env, "capabilities", None)
    if not callable(probe):
        return None
    try:
        return probe()
    except Exception:
        log.warning("capabilities() raised on %r; treating as undeclared", env)
        return None


def pick_snapshot_mode(env) -> str | None:
    """How this session will honor snapshots: "native", "copy", or None.

    Native pass-through needs snapshot/restore methods that the env
    actually stands behind: either its capabilities declare
    snapshot_restore, or it declares nothing at all and the methods
    speak for themselves. Otherwise a truthy ``copyable`` attribute
    opts the env into deepcopy snapshots.
    """
    caps = _declared_capabilities(env)
    declared = None if caps is None else bool(getattr(caps, "snapshot_restore", False))
    has_methods = callable(getattr(env, "snapshot", None)) and callable(
        getattr(env, "restore", None)
    )
    if has_methods and declared is not False:
        return "native"
    if getattr(env, "copyable", False):
        return "copy"
    return None


def caps_payload(env, snapshot_mode: str | None) -> dict:
    """The caps reply advertising what the wrapped env can do."""
    caps = _declared_capabilities(env)
    payload = {
        "t": "caps",
        "proto": PROTO_VERSION,
        "snapshot_restore": snapshot_mode is not None,
        "deterministic": bool(getattr(caps, "deterministic", True))
        if caps is not None
        else bool(getattr(env, "deterministic", True)),
        "name": str(getattr(env, "name", "environment")),
    }
    # Empty schema_id stays absent so clients fall back to their default.
    schema_id = getattr(env, "schema_id", "")
    if schema_id:
        payload["schema_id"] = str(schema_id)
    background = getattr(env, "background", "")
    if background:
        payload["background"] = str(background)
    inventory = getattr(caps, "action_inventory", None) if caps is not None else None
    if inventory:
        payload["action_inventory"] = [str(a) for a in inventory]
    probe = getattr(env, "fingerprint", None)
    if callable(probe):
        try:
            fingerprint = probe()
        except Exception:
            fingerprint = None
        if isinstance(fingerprint, str) and fingerprint:
            payload["fingerprint"] = fingerprint
    return payload


def _as_obs(result) -> dict:
    """Normalize a reset/step result into an obs reply."""
    if isinstance(result, str):
        return {"t": "obs", "text": result, "terminal": False, "score_delta": 0}
    if isinstance(result, dict):
        text, terminal, delta = (
            result.get("text", ""),
            result.get("terminal", False),
            result.get("score_delta", 0),
        )
    else:
        text = getattr(result, "text")
        terminal = getattr(result, "terminal", False)
        delta = getattr(result, "score_delta", 0)
    return {
        "t": "obs",
        "text": str(text),
        "terminal": bool(terminal),
        "score_delta": int(delta),
    }


class Session:
    """One client's view of one environment instance."""

    def __init__(self, env):
        self.env = env
        self.snapshot_mode = pick_snapshot_mode(env)
        self.has_episode = False
        self._snapshots: dict[str, tuple[object, bool]] = {}
        self._snap_counter = 0

    def handle_line(self, line: bytes):
        """One reply dict per request line, or the close sentinel."""
        try:
            message = json.loads(line)
        except (json.JSONDecodeError, UnicodeDecodeError):
            return _err(BAD_JSON)
        if not isinstance(message, dict) or not isinstance(message.get("t"), str):
            return _err(BAD_JSON)
        return self.handle(message)

    def handle(self, message: dict):
        kind = message["t"]
        if kind == "hello":
            return caps_payload(self.env, self.snapshot_mode)
        if kind == "reset":
            return self._reset()
        if kind == "step":
            return self._step(message)
        if kind == "snapshot":
            return self._snapshot()
        if kind == "restore":
            return self._restore(message)
        if kind == "close":
            return _CLOSE
        return _err(UNSUPPORTED)

    def _reset(self):
        try:
            obs = _as_obs(self.env.reset())
        except Exception as exc:
            log.warning("reset failed: %r", exc)
            return _err(ENV_ERROR)
        self.has_episode = True
        return obs

    def _step(self, message: dict):
        action = message.get("action")
        if not isinstance(action, str):
            return _err(BAD_REQUEST)
        if not self.has_episode:
            return _err(NO_EPISODE)
        try:
            return _as_obs(self.env.step(action))
        except Exception as exc:
            log.warning("step %r failed: %r", action, exc)
            return _err(ENV_ERROR)

    def _snapshot(self):
        if self.snapshot_mode is None:
            return _err(UNSUPPORTED)
        try:
            if self.snapshot_mode == "native":
                token = self.env.snapshot()
            else:
                token = copy.deepcopy(self.env)
        except Exception as exc:
            log.warning("snapshot failed: %r", exc)
            return _err(ENV_ERROR)
        self._snap_counter += 1
        snap_id = f"s{self._snap_counter}"
        self._snapshots[snap_id] = (token, self.has_episode)
        return {"t": "snap", "id": snap_id}

    def _restore(self, message: dict):
        if self.snapshot_mode is None:
            return _err(UNSUPPORTED)
        snap_id = message.get("id")
        if snap_id not in self._snapshots:
            return _err(UNKNOWN_SNAPSHOT)
        token, had_episode = self._snapshots[snap_id]
        try:
            if self.snapshot_mode == "native":
                self.env.restore(token)
            else:
                # Keep the stored copy pristine so the same snapshot
                # can be restored any number of times.
                self.env = copy.deepcopy(token)
        except Exception as exc:
            log.warning("restore %r failed: %r", snap_id, exc)
            return _err(ENV_ERROR)
        self.has_episode = had_episode
        return {"t": "ok"}

    def close(self) -> None:
        probe = getattr(self.env, "close", None)
        if callable(probe):
            try:
                probe()
            except Exception:
                pass


def run_session(env_factory, reader, writer) -> None:
    """Drive one session over a pair of binary line streams."""
    try:
        env = env_factory()
    except Exception as exc:
        log.error("environment factory failed, dropping connection: %r", exc)
        return
    session = Session(env)
    try:
        while True:
            line = reader.readline()
            if not line:
                break
            reply = session.handle_line(line)
            if reply is _CLOSE:
                break
            try:
                writer.write(json.dumps(reply, separators=(",", ":")).encode("utf-8") + b"\n")
                writer.flush()
            except (OSError, ValueError):
                break  # client went away mid-reply
    finally:
        session.close()


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        run_session(self.server.env_factory, self.rfile, self.wfile)


class BridgeServer(socketserver.ThreadingTCPServer):
    """TCP server giving each connection its own session and environment."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, env_factory, host: str = "127.0.0.1", port: int = 0):
        super().__init__((host, port), _Handler)
        self.env_factory = env_factory

    @property
    def endpoint(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"


def serve(env_factory, transport: str = "127.0.0.1:0") -> None:
    """Serve sessions until interrupted; blocks.

    ``transport`` is "host:port" (port 0 picks a free one; the chosen
    endpoint is announced on stderr) or "stdio" for a single session
    over this process's stdin and stdout.
    """
    if transport == "stdio":
        run_session(env_factory, sys.stdin.buffer, sys.stdout.buffer)
        return
    address = transport
    if address.startswith("tcp://"):
        address = address[len("tcp://"):]
    host, sep, port = address.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"bad transport {transport!r}; want host:port or stdio")
    server = BridgeServer(env_factory, host or "127.0.0.1", int(port))
    print(f"listening on {server.endpoint}", file=sys.stderr, flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
