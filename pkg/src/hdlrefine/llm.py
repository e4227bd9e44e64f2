"""Provider-agnostic chat completion with retries, plus a scripted mock backend."""

from __future__ import annotations

import enum
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Protocol, Sequence, Union

import httpx
import yaml

from .errors import ExtractionError, LlmFailure, TransientLlmError, ValidationError
from .model import HdlLanguage

log = logging.getLogger(__name__)


class Role(str, enum.Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


@dataclass(frozen=True)
class ChatMessage:
    role: Role
    content: str

    def __post_init__(self) -> None:
        if not self.content:
            raise ValidationError("chat message content must be non-empty")


@dataclass
class GenerationConfig:
    temperature: float = 0.2
    top_p: float = 0.1
    max_output_tokens: int = 4096
    model_id: str = "mock"
    request_timeout: float = 120.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.temperature <= 2.0:
            raise ValidationError("temperature must lie in [0, 2]")
        if not 0.0 < self.top_p <= 1.0:
            raise ValidationError("top_p must lie in (0, 1]")
        if self.max_output_tokens < 1:
            raise ValidationError("max_output_tokens must be positive")
        if self.request_timeout <= 0:
            raise ValidationError("request_timeout must be positive")


@dataclass
class Completion:
    text: str
    latency_ms: float
    provider_meta: dict[str, Any] = field(default_factory=dict)


class Backend(Protocol):
    name: str

    def chat(self, messages: Sequence[ChatMessage], config: GenerationConfig) -> tuple[str, dict]:
        """Return (reply text, provider metadata).

        Raise TransientLlmError for retryable failures and LlmFailure for
        permanent ones.
        """
        ...


@dataclass(frozen=True)
class MockFailure:
    """Script entry that makes the mock raise a transient error on that turn."""

    message: str = "scripted transient failure"


ScriptEntry = Union[str, MockFailure]


class MockBackend:
    """Replays a fixed script, one entry per chat() call.

    Every call, including failed ones, consumes a turn. All conversations
    are kept in ``transcript`` for later inspection.
    """

    name = "mock"

    def __init__(self, script: Sequence[ScriptEntry]):
        self.script = list(script)
        self.transcript: list[list[ChatMessage]] = []
        self._turn = 0
        self._lock = threading.Lock()

    @property
    def turns_consumed(self) -> int:
        return self._turn

    def chat(self, messages: Sequence[ChatMessage], config: GenerationConfig) -> tuple[str, dict]:
        with self._lock:
            turn = self._turn
            self._turn += 1
            self.transcript.append(list(messages))
        if turn >= len(self.script):
            raise LlmFailure(f"mock script exhausted after {len(self.script)} turns")
        entry = self.script[turn]
        if isinstance(entry, MockFailure):
            raise TransientLlmError(entry.message)
        return entry, {"turn": turn + 1}

    @classmethod
    def from_file(cls, path: "str | Path") -> "MockBackend":
        return cls(load_mock_script(path))


def load_mock_script(path: "str | Path") -> list[ScriptEntry]:
    """Read a YAML list of replies. ``{fail: msg}`` entries become failures."""
    raw = yaml.safe_load(Path(path).read_text())
    if not isinstance(raw, list):
        raise ValidationError(f"{path}: mock script must be a YAML list")
    script: list[ScriptEntry] = []
    for entry in raw:
        if isinstance(entry, str):
            script.append(entry)
        elif isinstance(entry, dict) and "fail" in entry:
            script.append(MockFailure(str(entry["fail"])))
        elif isinstance(entry, dict) and "response" in entry:
            script.append(str(entry["response"]))
        else:
            raise ValidationError(f"{path}: unsupported script entry {entry!r}")
    return script


def _raise_for_status(response: httpx.Response) -> None:
    if response.status_code == 429 or response.status_code >= 500:
        raise TransientLlmError(f"HTTP {response.status_code}: {response.text[:200]}")
    if response.status_code >= 400:
        raise LlmFailure(f"HTTP {response.status_code}: {response.text[:200]}")


class OpenAICompatibleBackend:
    """Any endpoint speaking the ``/chat/completions`` protocol."""

    def __init__(self, base_url: str, api_key: Optional[str], name: str = "openai",
                 client: Optional[httpx.Client] = None):
        self.name = name
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self._client = client or httpx.Client()

    def chat(self, messages: Sequence[ChatMessage], config: GenerationConfig) -> tuple[str, dict]:
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        body = {
            "model": config.model_id,
            "messages": [{"role": m.role.value, "content": m.content} for m in messages],
            "temperature": config.temperature,
            "top_p": config.top_p,
            "max_tokens": config.max_output_tokens,
        }
        try:
            response = self._client.post(f"{self.base_url}/chat/completions", json=body,
                                         headers=headers, timeout=config.request_timeout)
        except httpx.TransportError as exc:
            raise TransientLlmError(f"transport error: {exc}") from exc
        _raise_for_status(response)
        data = response.json()
        try:
            text = data["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise LlmFailure(f"malformed completion payload: {data!r:.200}") from exc
        return text, {"model": data.get("model"), "usage": data.get("usage")}


class AnthropicBackend:
    name = "anthropic"

    def __init__(self, api_key: Optional[str], base_url: str = "https://api.anthropic.com",
                 client: Optional[httpx.Client] = None):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self._client = client or httpx.Client()

    def chat(self, messages: Sequence[ChatMessage], config: GenerationConfig) -> tuple[str, dict]:
        system = "\n\n".join(m.content for m in messages if m.role is Role.SYSTEM)
        body: dict[str, Any] = {
            "model": config.model_id,
            "max_tokens": config.max_output_tokens,
            "temperature": config.temperature,
            "top_p": config.top_p,
            "messages": [{"role": m.role.value, "content": m.content}
                         for m in messages if m.role is not Role.SYSTEM],
        }
        if system:
            body["system"] = system
        headers = {"x-api-key": self.api_key or "", "anthropic-version": "2023-06-01"}
        try:
            response = self._client.post(f"{self.base_url}/v1/messages", json=body,
                                         headers=headers, timeout=config.request_timeout)
        except httpx.TransportError as exc:
            raise TransientLlmError(f"transport error: {exc}") from exc
        _raise_for_status(response)
        data = response.json()
        blocks = data.get("content") or []
        text = "".join(b.get("text", "") for b in blocks if b.get("type") == "text")
        return text, {"model": data.get("model"), "usage": data.get("usage")}


def make_backend(settings: dict[str, Any], base_dir: Optional[Path] = None) -> Backend:
    """Build a backend from the ``backend`` section of a run config.

    Credentials come from ``<NAME>_API_KEY`` unless ``api_key_env`` says otherwise.
    """
    name = str(settings.get("name", "mock")).lower()
    if name == "mock":
        script = settings.get("script")
        if script is None:
            return MockBackend(settings.get("responses", []))
        path = Path(script)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return MockBackend.from_file(path)
    api_key = os.environ.get(settings.get("api_key_env", f"{name.upper()}_API_KEY"))
    if name == "anthropic":
        return AnthropicBackend(api_key, settings.get("base_url", "https://api.anthropic.com"))
    base_url = settings.get("base_url")
    if name == "openai" and base_url is None:
        base_url = "https://api.openai.com/v1"
    if base_url is None:
        raise ValidationError(f"backend {name!r} needs a base_url")
    return OpenAICompatibleBackend(base_url, api_key, name=name)


def complete(
    conversation: Sequence[ChatMessage],
    config: GenerationConfig,
    backend: Backend,
    *,
    max_attempts: int = 3,
    backoff_base: float = 1.0,
    sleep: Callable[[float], None] = time.sleep,
) -> Completion:
    """Send ``conversation`` and return the reply text verbatim.

    Transient failures are retried with exponential backoff
    (``backoff_base * 2**k`` seconds); once attempts run out, LlmFailure is
    raised with the last error as its cause. ``latency_ms`` covers all
    attempts including backoff.
    """
    if not conversation:
        raise ValidationError("conversation must contain at least one message")
    start = time.perf_counter()
    last_error: Optional[Exception] = None
    for attempt in range(1, max_attempts + 1):
        try:
            text, meta = backend.chat(conversation, config)
        except TransientLlmError as exc:
            last_error = exc
            log.warning("LLM attempt %d/%d failed: %s", attempt, max_attempts, exc)
            if attempt < max_attempts:
                sleep(backoff_base * 2 ** (attempt - 1))
            continue
        latency = (time.perf_counter() - start) * 1000.0
        meta = dict(meta or {})
        meta["attempts"] = attempt
        return Completion(text=text, latency_ms=latency, provider_meta=meta)
    raise LlmFailure(f"LLM request failed after {max_attempts} attempts") from last_error


_LANGUAGE_TAGS = {
    HdlLanguage.VERILOG: {"verilog", "v", "systemverilog", "sv"},
    HdlLanguage.VHDL: {"vhdl", "vhd"},
}

_FENCE_RE = re.compile(r"```[ \t]*([\w+-]*)[^\n]*\n(.*?)(?:```|\Z)", re.DOTALL)


def extract_code_block(completion_text: str, language: HdlLanguage) -> str:
    """Pull source code out of an LLM reply.

    Preference order: first fence tagged with the target language, first
    untagged fence, first fence of any tag, the whole reply trimmed.
    """
    if not completion_text or not completion_text.strip():
        raise ExtractionError("completion is empty")
    blocks = [(tag.lower(), body.strip()) for tag, body in _FENCE_RE.findall(completion_text)]
    blocks = [(tag, body) for tag, body in blocks if body]
    wanted = _LANGUAGE_TAGS[HdlLanguage.parse(language)]
    for tag, body in blocks:
        if tag in wanted:
            return body
    for tag, body in blocks:
        if not tag:
            return body
    if blocks:
        return blocks[0][1]
    return completion_text.strip()
