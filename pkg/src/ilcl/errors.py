"""Shared exception types."""

from __future__ import annotations


class IlclError(Exception):
    """Base class for all package errors."""


class SchemaParseError(IlclError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DocumentParseError(IlclError):
    """Raised when document text cannot be turned into a Document.

    Carries the individual violations so callers can feed them back to
    the model for regeneration.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations)
        super().__init__(f"document does not parse: {lines}")


class PathParseError(IlclError):
    """A TODO path string does not follow 'state -> action -> ...'."""


class ForestError(IlclError):
    pass


class TemplateError(IlclError):
    pass


class ResponseParseError(IlclError):
    """A completion does not follow the response grammar of its template."""

    def __init__(self, message: str, position: int | None = None):
        self.position = position
        if position is not None:
            message = f"{message} (at offset {position})"
        super().__init__(message)


class ProviderError(IlclError):
    """Completion provider failure (exhausted cassette, transport, auth)."""

    def __init__(self, message: str, template_id: str | None = None):
        self.template_id = template_id
        if template_id:
            message = f"[{template_id}] {message}"
        super().__init__(message)


class EnvError(IlclError):
    pass


class UnsupportedCapability(EnvError):
    pass


class BridgeProtocolError(EnvError):
    """Protocol violation on the environment bridge; keeps the payload."""

    def __init__(self, message: str, payload=None):
        self.payload = payload
        if payload is not None:
            message = f"{message}: {payload!r}"
        super().__init__(message)


class ReplayDivergence(IlclError):
    """Replayed action produced a different observation than recorded."""

    def __init__(self, step_index: int, expected: str, got: str):
        self.step_index = step_index
        self.expected = expected
        self.got = got
        super().__init__(
            f"replay diverged at step {step_index}: "
            f"expected {expected[:80]!r}, got {got[:80]!r}"
        )


class ConfigError(IlclError):
    """Bad run configuration; maps to exit code 2 in the CLI."""
