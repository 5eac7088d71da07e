"""Prompt templates, response parsers, and completion providers."""

from .parsers import PARSER_BY_TEMPLATE, Decision
from .providers import (
    CompletionRequest,
    HTTPProvider,
    Provider,
    RecordingProvider,
    ScriptedProvider,
    invoke,
    request_digest,
)
from .templates import TEMPLATE_IDS, load_template, render_template

__all__ = [
    "CompletionRequest",
    "Decision",
    "HTTPProvider",
    "PARSER_BY_TEMPLATE",
    "Provider",
    "RecordingProvider",
    "ScriptedProvider",
    "TEMPLATE_IDS",
    "invoke",
    "load_template",
    "render_template",
    "request_digest",
]
