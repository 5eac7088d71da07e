"""Adapters that put existing environments behind the bridge surface."""

from __future__ import annotations


def wrap_textworld_like(env):
    """An env_factory for a TextWorld-style environment.

    Covers the common interactive-fiction calling convention:
    ``reset()`` returns the opening text (bare, or in a 1- or 2-tuple
    with an infos mapping) and ``step(action)`` returns
    ``(text, score, done)`` or ``(text, score, done, infos)`` where
    score is cumulative. The adapter turns cumulative score into
    per-step deltas and tracks its own episode, so several sessions
    can take turns on one underlying environment.
    """

    def factory():
        return TextWorldAdapter(env)

    return factory


def _opening_text(result) -> str:
    if isinstance(result, tuple):
        if not result:
            raise ValueError("reset returned an empty tuple")
        return str(result[0])
    return str(result)


class TextWorldAdapter:
    """Session-facing wrapper translating tuple results into observations."""

    def __init__(self, inner):
        self.inner = inner
        self.name = str(getattr(inner, "name", "textworld-env"))
        self.schema_id = str(getattr(inner, "schema_id", ""))
        self.background = str(getattr(inner, "background", ""))
        self.copyable = bool(getattr(inner, "copyable", False))
        self.deterministic = bool(getattr(inner, "deterministic", True))
        self._score = 0

    def reset(self) -> dict:
        text = _opening_text(self.inner.reset())
        self._score = 0
        return {"text": text, "terminal": False, "score_delta": 0}

    def step(self, action: str) -> dict:
        result = self.inner.step(action)
        if not isinstance(result, tuple) or len(result) < 3:
            raise ValueError(f"step returned {type(result).__name__}, want (text, score, done)")
        text, score, done = result[0], int(result[1]), bool(result[2])
        delta = score - self._score
        self._score = score
        return {"text": str(text), "terminal": done, "score_delta": delta}

    def close(self) -> None:
        probe = getattr(self.inner, "close", None)
        if callable(probe):
            probe()
