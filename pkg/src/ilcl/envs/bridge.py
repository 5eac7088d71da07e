"""Client for environments served over the newline-delimited JSON bridge.

One connection carries one session: the client sends a hello, the
server answers with its capabilities, and from then on every request
gets exactly one reply. Replies of type "err" surface as EnvError
(or UnsupportedCapability for the snapshot family); structurally
broken replies surface as BridgeProtocolError with the payload kept
for diagnosis.

Endpoints: "host:port" (optionally "tcp://host:port") for sockets, or
"stdio:<command ...>" to spawn a subprocess and talk over its pipes.
"""

from __future__ import annotations

import hashlib
import json
import shlex
import socket
import subprocess

from ..errors import BridgeProtocolError, EnvError, UnsupportedCapability
from .base import EnvCapabilities, Environment, Observation

PROTO_VERSION = 1
DEFAULT_TIMEOUT = 10.0


class BridgeConnection:
    """Line-oriented JSON transport over a socket or a child process."""

    def __init__(self, reader, writer, closer):
        self._reader = reader
        self._writer = writer
        self._closer = closer
        self.closed = False

    @classmethod
    def open(cls, endpoint: str, timeout: float = DEFAULT_TIMEOUT) -> "BridgeConnection":
        if endpoint.startswith("stdio:"):
            command = shlex.split(endpoint[len("stdio:"):])
            if not command:
                raise BridgeProtocolError("empty stdio command")
            proc = subprocess.Popen(
                command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=False,
            )

            def close():
                try:
                    proc.stdin.close()
                except OSError:
                    pass
                proc.wait(timeout=5)

            return cls(proc.stdout, proc.stdin, close)
        address = endpoint
        if address.startswith("tcp://"):
            address = address[len("tcp://"):]
        host, sep, port = address.rpartition(":")
        if not sep or not port.isdigit():
            raise BridgeProtocolError(f"bad endpoint {endpoint!r}; want host:port or stdio:cmd")
        try:
            sock = socket.create_connection((host or "127.0.0.1", int(port)), timeout=timeout)
        except OSError as exc:
            raise BridgeProtocolError(f"cannot connect to {endpoint}: {exc}") from exc
        sock.settimeout(timeout)
        reader = sock.makefile("rb")
        writer = sock.makefile("wb")

        def close():
            reader.close()
            writer.close()
            sock.close()

        return cls(reader, writer, close)

    def send(self, message: dict) -> None:
        self.send_raw(json.dumps(message, separators=(",", ":")))

    def send_raw(self, line: str) -> None:
        if self.closed:
            raise BridgeProtocolError("connection already closed")
        try:
            self._writer.write(line.encode("utf-8") + b"\n")
            self._writer.flush()
        except (OSError, ValueError) as exc:
            raise BridgeProtocolError(f"send failed: {exc}") from exc

    def recv(self) -> dict | None:
        """Next message, or None on clean end of stream."""
        try:
            line = self._reader.readline()
        except socket.timeout as exc:
            raise BridgeProtocolError("timed out waiting for server reply") from exc
        except (OSError, ValueError) as exc:
            raise BridgeProtocolError(f"receive failed: {exc}") from exc
        if not line:
            return None
        try:
            message = json.loads(line)
        except json.JSONDecodeError as exc:
            raise BridgeProtocolError(
                "server sent invalid json", payload=line.decode("utf-8", "replace")
            ) from exc
        if not isinstance(message, dict) or "t" not in message:
            raise BridgeProtocolError("server message has no type", payload=message)
        return message

    def request(self, message: dict) -> dict:
        self.send(message)
        reply = self.recv()
        if reply is None:
            raise BridgeProtocolError("server closed the connection mid-request")
        return reply

    def close(self) -> None:
        if not self.closed:
            self.closed = True
            try:
                self._closer()
            except OSError:
                pass


def connect(endpoint: str, timeout: float = DEFAULT_TIMEOUT) -> "BridgeEnv":
    """Open a session and perform the hello/caps handshake."""
    conn = BridgeConnection.open(endpoint, timeout=timeout)
    try:
        reply = conn.request({"t": "hello", "proto": PROTO_VERSION})
    except BridgeProtocolError:
        conn.close()
        raise
    if reply.get("t") != "caps":
        conn.close()
        raise BridgeProtocolError("handshake expected caps", payload=reply)
    if reply.get("proto") != PROTO_VERSION:
        conn.close()
        raise BridgeProtocolError(
            f"protocol version mismatch; want {PROTO_VERSION}", payload=reply
        )
    return BridgeEnv(conn, reply)


class BridgeEnv(Environment):
    """Environment whose operations are marshaled over a bridge session."""

    def __init__(self, conn: BridgeConnection, caps: dict):
        self.conn = conn
        self.caps_message = dict(caps)
        self.name = str(caps.get("name", "bridge"))
        self.schema_id = str(caps.get("schema_id", "roomworld"))
        self.background = str(caps.get("background", ""))
        inventory = caps.get("action_inventory")
        self._caps = EnvCapabilities(
            snapshot_restore=bool(caps.get("snapshot_restore", False)),
            deterministic=bool(caps.get("deterministic", True)),
            action_inventory=tuple(inventory) if inventory else None,
        )

    def _observation(self, reply: dict) -> Observation:
        if reply.get("t") == "err":
            raise EnvError(f"bridge error: {reply.get('code', 'unknown')}")
        if reply.get("t") != "obs":
            raise BridgeProtocolError("expected obs reply", payload=reply)
        try:
            return Observation(
                text=reply["text"],
                terminal=bool(reply["terminal"]),
                score_delta=int(reply["score_delta"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise BridgeProtocolError("malformed obs reply", payload=reply) from exc

    def reset(self) -> Observation:
        return self._observation(self.conn.request({"t": "reset"}))

    def step(self, action: str) -> Observation:
        return self._observation(self.conn.request({"t": "step", "action": action}))

    def capabilities(self) -> EnvCapabilities:
        return self._caps

    def snapshot(self) -> str:
        reply = self.conn.request({"t": "snapshot"})
        if reply.get("t") == "err":
            if reply.get("code") == "unsupported":
                raise UnsupportedCapability("server does not support snapshots")
            raise EnvError(f"bridge error: {reply.get('code', 'unknown')}")
        if reply.get("t") != "snap" or not isinstance(reply.get("id"), str):
            raise BridgeProtocolError("expected snap reply", payload=reply)
        return reply["id"]

    def restore(self, snapshot_id: str) -> None:
        reply = self.conn.request({"t": "restore", "id": snapshot_id})
        if reply.get("t") == "err":
            if reply.get("code") == "unsupported":
                raise UnsupportedCapability("server does not support snapshots")
            raise EnvError(f"bridge error: {reply.get('code', 'unknown')}")
        if reply.get("t") != "ok":
            raise BridgeProtocolError("expected ok reply to restore", payload=reply)

    def fingerprint(self) -> str:
        advertised = self.caps_message.get("fingerprint")
        if isinstance(advertised, str) and advertised:
            return advertised
        stable = json.dumps(self.caps_message, sort_keys=True)
        return hashlib.sha256(stable.encode("utf-8")).hexdigest()[:16]

    def close(self) -> None:
        if not self.conn.closed:
            try:
                self.conn.send({"t": "close"})
            except BridgeProtocolError:
                pass
            self.conn.close()
