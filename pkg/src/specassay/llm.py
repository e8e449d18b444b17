"""Chat-completion gateway: prompt templating, token ledger, retries, scripted mock.

The live backend speaks the OpenAI-compatible chat-completions HTTP API.
The mock backend replays a scripted list of (substring-to-find, response)
entries, consuming the first unconsumed entry that matches the rendered
prompt; with a fixed script, pipeline runs are bit-deterministic.
"""

from __future__ import annotations

import json
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

import requests

BACKEND_LIVE = "LIVE"
BACKEND_MOCK = "MOCK"

_PLACEHOLDER_RE = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")


class MissingPlaceholder(Exception):
    """A template placeholder has no binding; .name holds the placeholder."""

    def __init__(self, name: str):
        super().__init__(f"no binding for placeholder {name!r}")
        self.name = name


class TransportError(Exception):
    """Transport or server failure that survived all retries."""


class AuthError(Exception):
    """The endpoint rejected the credentials (HTTP 401/403)."""


class MockExhausted(Exception):
    """The mock script has no unconsumed entry matching the prompt."""


@dataclass(frozen=True)
class TokenUsage:
    prompt_tokens: int = 0
    completion_tokens: int = 0

    def __add__(self, other: "TokenUsage") -> "TokenUsage":
        return TokenUsage(
            self.prompt_tokens + other.prompt_tokens,
            self.completion_tokens + other.completion_tokens,
        )

    @property
    def total(self) -> int:
        return self.prompt_tokens + self.completion_tokens


@dataclass(frozen=True)
class LlmParams:
    model_name: str
    temperature: float = 0.5
    seed: int | None = None
    max_output_tokens: int = 1024

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")


@dataclass(frozen=True)
class PromptTemplate:
    """Ordered (role, text) messages with {name} placeholders; rendering is pure."""

    template_id: str
    role_messages: tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class LlmResponse:
    text: str
    usage: TokenUsage
    backend: str  # BACKEND_LIVE | BACKEND_MOCK


def render(template: PromptTemplate, bindings: dict[str, str]) -> list[dict[str, str]]:
    """Substitute placeholders; extra bindings are ignored, missing ones raise."""

    def substitute(match: re.Match) -> str:
        name = match.group(1)
        if name not in bindings:
            raise MissingPlaceholder(name)
        return bindings[name]

    return [
        {"role": role, "content": _PLACEHOLDER_RE.sub(substitute, text)}
        for role, text in template.role_messages
    ]


def template_placeholders(template: PromptTemplate) -> set[str]:
    names: set[str] = set()
    for _, text in template.role_messages:
        names.update(_PLACEHOLDER_RE.findall(text))
    return names


def parse_template(template_id: str, raw: str) -> PromptTemplate:
    """Parse a template file: optional [system]/[user] section headers.

    Without headers the whole file is a single user message.
    """
    messages: list[tuple[str, str]] = []
    role: str | None = None
    buf: list[str] = []
    for line in raw.splitlines():
        marker = line.strip().lower()
        if marker in ("[system]", "[user]"):
            if role is not None:
                messages.append((role, "\n".join(buf).strip()))
            role = marker[1:-1]
            buf = []
        else:
            buf.append(line)
    if role is None:
        messages.append(("user", raw.strip()))
    else:
        messages.append((role, "\n".join(buf).strip()))
    return PromptTemplate(template_id=template_id, role_messages=tuple(messages))


def load_template(path: str | Path) -> PromptTemplate:
    path = Path(path)
    return parse_template(path.stem, path.read_text(encoding="utf-8"))


def _approx_tokens(text: str) -> int:
    # Rough 4-chars-per-token estimate; only used where the backend reports nothing.
    return len(text) // 4


def _messages_text(messages: Sequence[dict[str, str]]) -> str:
    return "\n".join(m["content"] for m in messages)


class Backend(Protocol):
    def complete(self, messages: list[dict[str, str]], params: LlmParams) -> LlmResponse: ...


class MockBackend:
    """Scripted backend: ordered (substring, response) entries, each consumed once.

    Script consumption is lock-protected so concurrent pipeline workers keep
    determinism; concurrent tests must use content-disambiguated matchers.
    """

    def __init__(self, script: Iterable[tuple[str, str]]):
        self._entries = [
            {"match": match, "response": response, "used": False}
            for match, response in script
        ]
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> "MockBackend":
        """Load a script from JSONL lines of {"match": ..., "response": ...}."""
        entries = []
        with open(path, encoding="utf-8") as fh:
            for raw in fh:
                line = raw.strip()
                if not line:
                    continue
                obj = json.loads(line)
                entries.append((obj["match"], obj["response"]))
        return cls(entries)

    @property
    def remaining(self) -> int:
        with self._lock:
            return sum(1 for e in self._entries if not e["used"])

    def complete(self, messages: list[dict[str, str]], params: LlmParams) -> LlmResponse:
        text = _messages_text(messages)
        with self._lock:
            for entry in self._entries:
                if not entry["used"] and entry["match"] in text:
                    entry["used"] = True
                    response = entry["response"]
                    break
            else:
                raise MockExhausted(
                    f"no unconsumed script entry matches prompt starting {text[:80]!r}"
                )
        usage = TokenUsage(_approx_tokens(text), _approx_tokens(response))
        return LlmResponse(text=response, usage=usage, backend=BACKEND_MOCK)


class LiveBackend:
    """OpenAI-compatible chat-completions client with bounded retries.

    Retries transport failures and 5xx responses (3 attempts, 1s/2s/4s
    backoff); 401/403 raise AuthError immediately, other 4xx raise
    TransportError without retrying.
    """

    def __init__(
        self,
        endpoint: str,
        api_key: str | None = None,
        retries: int = 3,
        backoff_s: float = 1.0,
        request_timeout_s: float = 120.0,
        session: requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.url = self._completions_url(endpoint)
        self.api_key = api_key
        self.retries = max(1, retries)
        self.backoff_s = backoff_s
        self.request_timeout_s = request_timeout_s
        self._session = session or requests.Session()
        self._sleep = sleep

    @staticmethod
    def _completions_url(endpoint: str) -> str:
        base = endpoint.rstrip("/")
        if base.endswith("/chat/completions"):
            return base
        if base.endswith("/v1"):
            return base + "/chat/completions"
        return base + "/v1/chat/completions"

    def complete(self, messages: list[dict[str, str]], params: LlmParams) -> LlmResponse:
        body = {
            "model": params.model_name,
            "messages": messages,
            "temperature": params.temperature,
            "max_tokens": params.max_output_tokens,
        }
        if params.seed is not None:
            body["seed"] = params.seed
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        last_error: str = ""
        for attempt in range(1, self.retries + 1):
            try:
                resp = self._session.post(
                    self.url, json=body, headers=headers, timeout=self.request_timeout_s
                )
            except requests.RequestException as exc:
                last_error = f"transport failure: {exc}"
            else:
                if resp.status_code in (401, 403):
                    raise AuthError(f"endpoint rejected credentials (HTTP {resp.status_code})")
                if resp.status_code >= 500:
                    last_error = f"server error HTTP {resp.status_code}"
                elif resp.status_code != 200:
                    raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                else:
                    return self._parse_response(resp.json())
            if attempt < self.retries:
                self._sleep(self.backoff_s * 2 ** (attempt - 1))
        raise TransportError(f"{last_error} after {self.retries} attempts")

    @staticmethod
    def _parse_response(data: dict) -> LlmResponse:
        try:
            text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed completion payload: {exc}") from exc
        usage_obj = data.get("usage") or {}
        usage = TokenUsage(
            prompt_tokens=int(usage_obj.get("prompt_tokens", 0)),
            completion_tokens=int(usage_obj.get("completion_tokens", 0)),
        )
        return LlmResponse(text=text or "", usage=usage, backend=BACKEND_LIVE)


@dataclass(frozen=True)
class UsageEntry:
    task_id: str
    candidate_id: str
    stage: str
    usage: TokenUsage


@dataclass(frozen=True)
class PromptRecord:
    task_id: str
    candidate_id: str
    stage: str
    text: str


class LlmGateway:
    """Backend wrapper that attributes every call to (task, candidate, stage)."""

    def __init__(self, backend: Backend, record_prompts: bool = False):
        self._backend = backend
        self._lock = threading.Lock()
        self._ledger: list[UsageEntry] = []
        self._prompts: list[PromptRecord] | None = [] if record_prompts else None

    def complete(
        self,
        messages: list[dict[str, str]],
        params: LlmParams,
        *,
        stage: str,
        task_id: str = "",
        candidate_id: str = "",
    ) -> LlmResponse:
        response = self._backend.complete(messages, params)
        with self._lock:
            self._ledger.append(UsageEntry(task_id, candidate_id, stage, response.usage))
            if self._prompts is not None:
                self._prompts.append(
                    PromptRecord(task_id, candidate_id, stage, _messages_text(messages))
                )
        return response

    def ledger(self) -> list[UsageEntry]:
        with self._lock:
            return list(self._ledger)

    def recorded_prompts(self) -> list[PromptRecord]:
        with self._lock:
            return list(self._prompts or [])

    def ledger_total(self) -> TokenUsage:
        return usage_total(entry.usage for entry in self.ledger())

    def usage_for(self, task_id: str, candidate_id: str) -> TokenUsage:
        return usage_total(
            entry.usage
            for entry in self.ledger()
            if entry.task_id == task_id and entry.candidate_id == candidate_id
        )


def usage_total(items: Iterable[TokenUsage | LlmResponse]) -> TokenUsage:
    """Component-wise sum over usages or responses."""
    total = TokenUsage()
    for item in items:
        total = total + (item.usage if isinstance(item, LlmResponse) else item)
    return total
