"""Completion providers: scripted playback, cassette recording, HTTP.

Cassettes make exploration runs reproducible: a live run records every
completion keyed by a digest of the prompt bindings, and a later run
replays them in order, failing loudly when the prompts drift.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import requests

from ..errors import ProviderError, ResponseParseError
from .parsers import PARSER_BY_TEMPLATE
from .templates import render_template

CASSETTE_VERSION = 1

# Planning benefits from variety; edit checking must be repeatable.
DEFAULT_TEMPERATURE = {
    "planner_obs_todo": 0.7,
    "planner_rule_todo": 0.7,
    "planner_promote": 0.7,
    "planner_loop_control": 0.0,
    "actor_subagent": 0.7,
    "extractor_obs_edits": 0.7,
    "extractor_rule_edits": 0.7,
    "extractor_check": 0.0,
    "extractor_apply": 0.0,
    "keyresult_summarize": 0.0,
}


@dataclass(frozen=True)
class CompletionRequest:
    template_id: str
    prompt: str
    temperature: float = 0.0
    max_output: int = 4096
    attempt: int = 0
    bindings: Mapping | None = field(default=None, compare=False)


def request_digest(template_id: str, bindings: Mapping | None) -> str:
    """Stable 16-hex digest of a prompt's identity.

    Hashes the bound values individually so huge bindings (forest dumps,
    trajectories) stay cheap to compare and the cassette stays small.
    """
    values = {
        key: hashlib.sha256(str(value).encode()).hexdigest()
        for key, value in sorted((bindings or {}).items())
        if value is not None
    }
    blob = json.dumps({"template_id": template_id, "bindings": values}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


class Provider:
    """Interface: turn a CompletionRequest into response text."""

    def complete(self, request: CompletionRequest) -> str:
        raise NotImplementedError


class ScriptedProvider(Provider):
    """Replays canned responses per template id, in order."""

    def __init__(self, responses: Mapping[str, list], check_digest: bool = False):
        self._queues = {tid: deque(items) for tid, items in responses.items()}
        self._check_digest = check_digest

    @classmethod
    def from_cassette(cls, path, check_digest: bool = True) -> "ScriptedProvider":
        data = json.loads(Path(path).read_text())
        if data.get("version") != CASSETTE_VERSION:
            raise ProviderError(f"unsupported cassette version in {path}")
        responses: dict[str, list] = {}
        for entry in data["entries"]:
            responses.setdefault(entry["template_id"], []).append(
                (entry["digest"], entry["response"])
            )
        return cls(responses, check_digest=check_digest)

    def complete(self, request: CompletionRequest) -> str:
        queue = self._queues.get(request.template_id)
        if not queue:
            raise ProviderError(
                "no scripted responses left", template_id=request.template_id
            )
        item = queue.popleft()
        if isinstance(item, tuple):
            digest, response = item
        else:
            digest, response = None, item
        if self._check_digest and digest is not None:
            want = request_digest(request.template_id, request.bindings)
            if digest != want:
                raise ProviderError(
                    f"cassette digest mismatch: recorded {digest}, request {want}",
                    template_id=request.template_id,
                )
        return response


class RecordingProvider(Provider):
    """Write-through wrapper that appends every completion to a cassette."""

    def __init__(self, inner: Provider, path):
        self._inner = inner
        self._path = Path(path)
        self._entries: list[dict] = []

    def complete(self, request: CompletionRequest) -> str:
        response = self._inner.complete(request)
        self._entries.append(
            {
                "template_id": request.template_id,
                "digest": request_digest(request.template_id, request.bindings),
                "response": response,
            }
        )
        self.save()
        return response

    def save(self) -> None:
        payload = {"version": CASSETTE_VERSION, "entries": self._entries}
        self._path.write_text(json.dumps(payload, indent=1))


class HTTPProvider(Provider):
    """OpenAI-style chat completions over HTTP.

    The key is read from the ILCL_API_KEY environment variable and never
    written to disk or into run artifacts.
    """

    RETRY_STATUSES = frozenset({429, 500, 502, 503, 504})

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        timeout: float = 60.0,
        max_retries: int = 5,
        base_delay: float = 0.5,
        max_delay: float = 8.0,
        sleeper=time.sleep,
        session=None,
    ):
        self._base_url = base_url.rstrip("/")
        self._model = model
        self._api_key = api_key if api_key is not None else os.environ.get("ILCL_API_KEY")
        if not self._api_key:
            raise ProviderError("ILCL_API_KEY is not set and no api_key was given")
        self._timeout = timeout
        self._max_retries = max_retries
        self._base_delay = base_delay
        self._max_delay = max_delay
        self._sleep = sleeper
        self._session = session or requests.Session()

    def complete(self, request: CompletionRequest) -> str:
        payload = {
            "model": self._model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_output,
        }
        headers = {"Authorization": f"Bearer {self._api_key}"}
        url = f"{self._base_url}/chat/completions"
        last_error = "no attempt made"
        for attempt in range(self._max_retries + 1):
            try:
                resp = self._session.post(
                    url, json=payload, headers=headers, timeout=self._timeout
                )
            except requests.RequestException as exc:
                last_error = f"transport error: {exc}"
            else:
                if resp.status_code == 200:
                    return self._extract_text(resp, request.template_id)
                last_error = f"HTTP {resp.status_code}"
                if resp.status_code not in self.RETRY_STATUSES:
                    raise ProviderError(last_error, template_id=request.template_id)
            if attempt < self._max_retries:
                self._sleep(min(self._max_delay, self._base_delay * 2**attempt))
        raise ProviderError(
            f"gave up after {self._max_retries + 1} attempts; last: {last_error}",
            template_id=request.template_id,
        )

    @staticmethod
    def _extract_text(resp, template_id: str) -> str:
        try:
            data = resp.json()
            return data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProviderError(
                f"malformed completion response: {exc}", template_id=template_id
            ) from exc


_RETRY_NOTE = (
    "\n\nYour previous reply could not be parsed: {error}\n"
    "Previous reply:\n{response}\n\n"
    "Reply again and follow the output format exactly."
)


def invoke(provider: Provider, template_id: str, bindings: Mapping, *,
           temperature: float | None = None, max_output: int = 4096,
           parse_retries: int = 3, on_retry=None, validate=None):
    """Render, complete, and parse; re-prompts on grammar violations.

    Returns (parsed, raw_response). `validate(parsed)` may raise
    ResponseParseError to reject a well-formed but semantically bad
    response through the same retry machinery. A provider that keeps
    producing unusable text exhausts the retry budget and raises
    ProviderError.
    """
    if temperature is None:
        temperature = DEFAULT_TEMPERATURE.get(template_id, 0.0)
    base_prompt = render_template(template_id, bindings)
    parser = PARSER_BY_TEMPLATE[template_id]
    prompt = base_prompt
    last_exc: ResponseParseError | None = None
    for attempt in range(parse_retries + 1):
        request = CompletionRequest(
            template_id=template_id,
            prompt=prompt,
            temperature=temperature,
            max_output=max_output,
            attempt=attempt,
            bindings=bindings,
        )
        response = provider.complete(request)
        try:
            parsed = parser(response)
            if validate is not None:
                validate(parsed)
            return parsed, response
        except ResponseParseError as exc:
            last_exc = exc
            if on_retry is not None:
                on_retry(template_id, attempt, exc)
            prompt = base_prompt + _RETRY_NOTE.format(error=exc, response=response)
    raise ProviderError(
        f"unparseable after {parse_retries + 1} attempts: {last_exc}",
        template_id=template_id,
    )
