"""Reference server for the JSON-lines environment bridge."""

from .adapters import TextWorldAdapter, wrap_textworld_like
from .server import PROTO_VERSION, BridgeServer, Session, serve
from .toy import ToyRooms, toy_factory

__all__ = [
    "PROTO_VERSION",
    "BridgeServer",
    "Session",
    "TextWorldAdapter",
    "ToyRooms",
    "serve",
    "toy_factory",
    "wrap_textworld_like",
]
