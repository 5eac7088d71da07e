"""Protocol conformance suite run against a bridge endpoint.

Twelve scenarios, each on a fresh connection, checking the message
contract a server must honor. The scenario ids mirror the shared
fixture file (protocol/conformance.json) that server implementations
test themselves against.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import BridgeProtocolError
from .bridge import PROTO_VERSION, BridgeConnection

PROBE_ACTIONS = ["alpha", "beta", "gamma", "delta", "epsilon"]


@dataclass
class ScenarioResult:
    scenario: str
    passed: bool
    detail: str = ""


def _handshake(conn: BridgeConnection) -> dict:
    reply = conn.request({"t": "hello", "proto": PROTO_VERSION})
    if reply.get("t") != "caps":
        raise BridgeProtocolError("expected caps", payload=reply)
    return reply


def _expect_obs(reply: dict) -> dict:
    if reply.get("t") != "obs":
        raise BridgeProtocolError("expected obs", payload=reply)
    if not isinstance(reply.get("text"), str):
        raise BridgeProtocolError("obs.text must be a string", payload=reply)
    if not isinstance(reply.get("terminal"), bool):
        raise BridgeProtocolError("obs.terminal must be a boolean", payload=reply)
    if not isinstance(reply.get("score_delta"), int) or isinstance(
        reply.get("score_delta"), bool
    ):
        raise BridgeProtocolError("obs.score_delta must be an integer", payload=reply)
    return reply


def _expect_err(reply: dict, code: str | None = None) -> dict:
    if reply.get("t") != "err":
        raise BridgeProtocolError("expected err", payload=reply)
    if not isinstance(reply.get("code"), str):
        raise BridgeProtocolError("err.code must be a string", payload=reply)
    if code is not None and reply["code"] != code:
        raise BridgeProtocolError(f"expected err code {code!r}", payload=reply)
    return reply


def _walk(conn: BridgeConnection, actions) -> list[str]:
    texts = []
    for action in actions:
        reply = _expect_obs(conn.request({"t": "step", "action": action}))
        texts.append(reply["text"])
        if reply["terminal"]:
            _expect_obs(conn.request({"t": "reset"}))
    return texts


def scenario_handshake_caps(conn: BridgeConnection):
    caps = _handshake(conn)
    if caps.get("proto") != PROTO_VERSION:
        raise BridgeProtocolError("caps.proto must match the hello", payload=caps)
    for flag in ("snapshot_restore", "deterministic"):
        if not isinstance(caps.get(flag), bool):
            raise BridgeProtocolError(f"caps.{flag} must be a boolean", payload=caps)


def scenario_reset_returns_obs(conn: BridgeConnection):
    _handshake(conn)
    _expect_obs(conn.request({"t": "reset"}))


def scenario_step_returns_obs(conn: BridgeConnection):
    _handshake(conn)
    _expect_obs(conn.request({"t": "reset"}))
    _expect_obs(conn.request({"t": "step", "action": PROBE_ACTIONS[0]}))


def scenario_failed_action_is_obs(conn: BridgeConnection):
    _handshake(conn)
    _expect_obs(conn.request({"t": "reset"}))
    _expect_obs(conn.request({"t": "step", "action": "zzz unparseable action zzz"}))


def scenario_determinism_across_resets(conn: BridgeConnection):
    caps = _handshake(conn)
    if not caps.get("deterministic", True):
        return "skipped: server is not deterministic"
    _expect_obs(conn.request({"t": "reset"}))
    first = _walk(conn, PROBE_ACTIONS)
    _expect_obs(conn.request({"t": "reset"}))
    second = _walk(conn, PROBE_ACTIONS)
    if first != second:
        raise BridgeProtocolError("observation sequences differ across resets")
    return None


def scenario_unknown_type_unsupported(conn: BridgeConnection):
    _handshake(conn)
    _expect_err(conn.request({"t": "bogus"}), code="unsupported")
    _expect_obs(conn.request({"t": "reset"}))


def scenario_bad_json_keeps_session(conn: BridgeConnection):
    _handshake(conn)
    conn.send_raw("{this is not json")
    reply = conn.recv()
    if reply is None:
        raise BridgeProtocolError("server closed the session on bad json")
    _expect_err(reply)
    _expect_obs(conn.request({"t": "reset"}))


def scenario_step_before_reset_err(conn: BridgeConnection):
    _handshake(conn)
    _expect_err(conn.request({"t": "step", "action": PROBE_ACTIONS[0]}))
    _expect_obs(conn.request({"t": "reset"}))


def scenario_snapshot_capability_respected(conn: BridgeConnection):
    caps = _handshake(conn)
    _expect_obs(conn.request({"t": "reset"}))
    reply = conn.request({"t": "snapshot"})
    if caps.get("snapshot_restore"):
        if reply.get("t") != "snap" or not isinstance(reply.get("id"), str):
            raise BridgeProtocolError("expected snap with string id", payload=reply)
    else:
        _expect_err(reply, code="unsupported")


def scenario_restore_unknown_id_err(conn: BridgeConnection):
    caps = _handshake(conn)
    _expect_obs(conn.request({"t": "reset"}))
    reply = conn.request({"t": "restore", "id": "no-such-snapshot"})
    if caps.get("snapshot_restore"):
        _expect_err(reply)
    else:
        _expect_err(reply, code="unsupported")
    _expect_obs(conn.request({"t": "reset"}))


def scenario_snapshot_law_replay(conn: BridgeConnection):
    caps = _handshake(conn)
    if not caps.get("snapshot_restore"):
        return "skipped: snapshots not advertised"
    _expect_obs(conn.request({"t": "reset"}))
    _walk(conn, PROBE_ACTIONS[:2])
    snap = conn.request({"t": "snapshot"})
    if snap.get("t") != "snap":
        raise BridgeProtocolError("expected snap", payload=snap)
    first = _walk(conn, PROBE_ACTIONS)
    ack = conn.request({"t": "restore", "id": snap["id"]})
    if ack.get("t") != "ok":
        raise BridgeProtocolError("expected ok ack to restore", payload=ack)
    second = _walk(conn, PROBE_ACTIONS)
    if first != second:
        raise BridgeProtocolError("replay after restore diverged")
    return None


def scenario_close_ends_session(conn: BridgeConnection):
    _handshake(conn)
    conn.send({"t": "close"})
    reply = conn.recv()
    if reply is not None:
        raise BridgeProtocolError("expected end of stream after close", payload=reply)


SCENARIOS = [
    ("handshake_caps", scenario_handshake_caps),
    ("reset_returns_obs", scenario_reset_returns_obs),
    ("step_returns_obs", scenario_step_returns_obs),
    ("failed_action_is_obs", scenario_failed_action_is_obs),
    ("determinism_across_resets", scenario_determinism_across_resets),
    ("unknown_type_unsupported", scenario_unknown_type_unsupported),
    ("bad_json_keeps_session", scenario_bad_json_keeps_session),
    ("step_before_reset_err", scenario_step_before_reset_err),
    ("snapshot_capability_respected", scenario_snapshot_capability_respected),
    ("restore_unknown_id_err", scenario_restore_unknown_id_err),
    ("snapshot_law_replay", scenario_snapshot_law_replay),
    ("close_ends_session", scenario_close_ends_session),
]


def run_conformance(endpoint: str, timeout: float = 10.0) -> list[ScenarioResult]:
    """Run every scenario on its own connection; never raises per-scenario."""
    results = []
    for scenario_id, fn in SCENARIOS:
        try:
            conn = BridgeConnection.open(endpoint, timeout=timeout)
        except BridgeProtocolError as exc:
            results.append(ScenarioResult(scenario_id, False, str(exc)))
            continue
        try:
            note = fn(conn)
            results.append(ScenarioResult(scenario_id, True, note or ""))
        except Exception as exc:
            results.append(ScenarioResult(scenario_id, False, str(exc)))
        finally:
            conn.close()
    return results
