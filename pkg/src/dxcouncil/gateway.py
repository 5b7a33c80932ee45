"""Single chokepoint for model calls, with live, record, and replay backends.

Every call renders a versioned template, hashes the canonical form of the
prompt, and appends the exchange to the case trace. The canonical key is
stable under trailing-whitespace and line-ending drift, which is what lets a
transcript recorded on one machine replay anywhere.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol, TextIO, runtime_checkable

import requests

from .errors import (
    DuplicateTranscriptKeyError,
    EmptyResponseError,
    EngineError,
    GatewayError,
    ReplayMissError,
    TranscriptError,
    TransportError,
)
from .templates import PromptTask, TaskKind, get_template
from .trace import Trace

__all__ = [
    "TaskKind",
    "PromptTask",
    "ChatExchange",
    "Gateway",
    "HttpChatBackend",
    "ReplayChatBackend",
    "RecordingBackend",
    "ScriptedResponder",
    "TranscriptRecorder",
    "canonical_key",
    "normalize_prompt",
    "load_transcript",
]

LIVE = "live"
REPLAY = "replay"


def normalize_prompt(text: str) -> str:
    """Canonical prompt form: LF line endings, no trailing whitespace on any
    line, no trailing newlines."""
    unified = text.replace("\r\n", "\n").replace("\r", "\n")
    return "\n".join(line.rstrip() for line in unified.split("\n")).rstrip()


def canonical_key(task: PromptTask, rendered_prompt: str) -> str:
    payload = "\n".join([task.kind.value, task.template_version,
                         normalize_prompt(rendered_prompt)])
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ChatExchange:
    task: PromptTask
    rendered_prompt: str
    response_text: str
    canonical_key: str
    backend: str


@runtime_checkable
class ChatBackend(Protocol):
    label: str

    def respond(self, task: PromptTask, system: str, user: str, key: str) -> str:
        ...


class HttpChatBackend:
    """OpenAI-compatible chat endpoint, temperature pinned to 0.

    One retry on transport failure, then a hard error; the deliberation loop
    must not stall silently.
    """

    label = LIVE

    def __init__(self, endpoint: str, model: str, timeout: float = 60.0):
        self.endpoint = endpoint
        self.model = model
        self.timeout = timeout

    def respond(self, task: PromptTask, system: str, user: str, key: str) -> str:
        body = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": 0,
        }
        last: Exception | None = None
        for _ in range(2):
            try:
                resp = requests.post(self.endpoint, json=body, timeout=self.timeout)
            except requests.RequestException as exc:
                last = TransportError(f"chat request failed: {exc}")
                continue
            if resp.status_code != 200:
                last = TransportError(
                    f"chat endpoint returned {resp.status_code}",
                    status=resp.status_code, body=resp.text[:500])
                continue
            try:
                return str(resp.json()["choices"][0]["message"]["content"])
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise TransportError(f"malformed chat response: {exc}",
                                     body=resp.text[:500]) from exc
        assert last is not None
        raise last


class ReplayChatBackend:
    """Serves responses from a recorded transcript; never touches the network."""

    label = REPLAY

    def __init__(self, table: dict[str, str]):
        self._table = dict(table)

    @classmethod
    def from_file(cls, path: str | Path) -> "ReplayChatBackend":
        return cls(load_transcript(path))

    def __len__(self) -> int:
        return len(self._table)

    def respond(self, task: PromptTask, system: str, user: str, key: str) -> str:
        try:
            return self._table[key]
        except KeyError:
            raise ReplayMissError(key, task.kind.value) from None


class TranscriptRecorder:
    """Append-only transcript sink, one JSON object per line.

    Repeated identical (key, response) pairs are written once; the same key
    with a different response means the upstream model was nondeterministic
    and is rejected outright.
    """

    def __init__(self, sink: str | Path | TextIO):
        if hasattr(sink, "write"):
            self._fh: TextIO = sink
            self._owns = False
        else:
            self._fh = open(sink, "w", encoding="utf-8")
            self._owns = True
        self._seen: dict[str, str] = {}
        self._lock = threading.Lock()

    def record(self, key: str, task: str, response: str) -> None:
        with self._lock:
            if key in self._seen:
                if self._seen[key] != response:
                    raise DuplicateTranscriptKeyError(key)
                return
            self._seen[key] = response
            self._fh.write(json.dumps({"key": key, "task": task, "response": response},
                                      ensure_ascii=False) + "\n")
            self._fh.flush()

    def close(self) -> None:
        if self._owns:
            self._fh.close()


class RecordingBackend:
    """Wraps a backend and captures every (canonical_key, response) pair."""

    def __init__(self, inner: ChatBackend, recorder: TranscriptRecorder):
        self._inner = inner
        self._recorder = recorder

    @property
    def label(self) -> str:
        return self._inner.label

    def respond(self, task: PromptTask, system: str, user: str, key: str) -> str:
        response = self._inner.respond(task, system, user, key)
        self._recorder.record(key, task.kind.value, response)
        return response


ScriptRule = tuple[TaskKind, "str | Callable[[str, str], bool]",
                   "str | Callable[[str, str], str]"]


class ScriptedResponder:
    """Rule-driven offline stand-in for a live model.

    Rules are (kind, matcher, response) triples tried in order; the first
    whose kind matches and whose matcher accepts the prompt wins. A string
    matcher is a substring test over system and user text together; a
    callable matcher is a predicate over (system, user). A callable response
    receives (system, user). Used to author replay transcripts and to force
    specific branches in tests.
    """

    label = LIVE

    def __init__(self, rules: list[ScriptRule]):
        self._rules = list(rules)

    def respond(self, task: PromptTask, system: str, user: str, key: str) -> str:
        combined = system + "\n" + user
        for kind, matcher, response in self._rules:
            if kind is not task.kind:
                continue
            hit = matcher(system, user) if callable(matcher) else matcher in combined
            if hit:
                return response(system, user) if callable(response) else response
        raise GatewayError(
            f"no scripted rule matches task {task.kind.value!r} "
            f"(prompt starts {user[:80]!r})")


def load_transcript(source: str | Path | TextIO) -> dict[str, str]:
    """Build the exact-match replay table from a transcript file."""
    if hasattr(source, "read"):
        name, payload = getattr(source, "name", "<stream>"), source.read()
    else:
        name, payload = str(source), Path(source).read_text(encoding="utf-8")
    table: dict[str, str] = {}
    for line_no, line in enumerate(payload.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            key, response = str(row["key"]), str(row["response"])
        except (json.JSONDecodeError, KeyError) as exc:
            raise TranscriptError(f"{name}:{line_no}: bad transcript row: {exc}") from exc
        if key in table and table[key] != response:
            raise DuplicateTranscriptKeyError(key)
        table[key] = response
    return table


class Gateway:
    """Renders, hashes, dispatches, and traces every model call."""

    def __init__(self, backend: ChatBackend, trace: Trace | None = None,
                 template_version: str = "v1"):
        self.backend = backend
        self.trace = trace
        self.template_version = template_version

    def for_trace(self, trace: Trace | None) -> "Gateway":
        """Same backend and template version, bound to a different trace."""
        return Gateway(self.backend, trace, self.template_version)

    def complete(self, kind: TaskKind, variables: dict[str, str]) -> ChatExchange:
        task = PromptTask(kind, self.template_version)
        template = get_template(kind, self.template_version)
        system, user = template.render(variables)
        rendered = system + "\n\n" + user
        key = canonical_key(task, rendered)
        try:
            response = self.backend.respond(task, system, user, key)
        except EngineError:
            raise
        except Exception as exc:
            raise GatewayError(f"backend failure on task {kind.value!r}: {exc}") from exc
        if not response.strip():
            raise EmptyResponseError(f"empty response for task {kind.value!r}")
        exchange = ChatExchange(task, rendered, response, key, self.backend.label)
        if self.trace is not None:
            self.trace.exchange(task=kind.value, canonical_key=key, prompt=rendered,
                                response=response, backend=self.backend.label)
        return exchange
