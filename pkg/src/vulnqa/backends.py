"""Completion backends: remote providers, a deterministic extractor, and replay.

Every backend is reached through :func:`complete`, which never raises for
runtime problems: failures come back inside ``LlmResponse.failure`` so the
evaluation layer can classify them. The extractor backend answers only from
the chunks embedded in the prompt's context section and serves as the
harness's perfect-model oracle.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable

import requests

from .corpus import format_score
from .prompting import AssembledPrompt, estimate_tokens

TRANSCRIPT_FORMAT_VERSION = 1

_QUESTION_FIELD_KEYWORDS = (
    ("published date", "published_date"),
    ("exploitability score", "exploitability_score"),
    ("impact score", "impact_score"),
    ("base score", "base_score"),
    ("description", "description"),
)

_CVE_MENTION_RE = re.compile(r"CVE-\d{4}-\d{4,}", re.IGNORECASE)


class ProviderKind(str, Enum):
    OPENAI_COMPATIBLE = "openai_compatible"
    GEMINI = "gemini"
    LLAMA = "llama_local_or_hosted"
    EXTRACTOR = "extractor"
    REPLAY = "replay"


class FailureKind(str, Enum):
    TIMEOUT = "timeout"
    TRANSPORT = "transport"
    PROVIDER_ERROR = "provider_error"
    CONTEXT_OVERFLOW = "context_overflow"


class ReplayMiss(KeyError):
    """Requested transcript key is not in the store."""


class TransportError(Exception):
    """Network-level failure before a provider response arrived."""


class ProviderStatusError(Exception):
    """Provider answered with an HTTP error status."""

    def __init__(self, status: int, message: str = ""):
        super().__init__(f"provider returned {status}: {message}")
        self.status = status


@dataclass
class BackendConfig:
    backend_id: str
    provider_kind: ProviderKind
    model_name: str = ""
    endpoint_url: str = ""
    api_key_env_var: str = ""
    context_window_tokens: int = 128_000
    price_per_1m_input: float = 0.0
    price_per_1m_output: float = 0.0
    max_retries: int = 3
    timeout: float = 30.0
    max_concurrency: int = 4


def default_backend_configs() -> dict[str, BackendConfig]:
    """Built-in configurations for the three reference models plus the
    hermetic extractor and replay backends."""
    configs = [
        BackendConfig(
            backend_id="gpt-4o-mini",
            provider_kind=ProviderKind.OPENAI_COMPATIBLE,
            model_name="gpt-4o-mini",
            endpoint_url="https://api.openai.com/v1/chat/completions",
            api_key_env_var="OPENAI_API_KEY",
            context_window_tokens=128_000,
            price_per_1m_input=0.15,
            price_per_1m_output=0.60,
        ),
        BackendConfig(
            backend_id="gemini-1.5-pro",
            provider_kind=ProviderKind.GEMINI,
            model_name="gemini-1.5-pro",
            endpoint_url="https://generativelanguage.googleapis.com/v1beta",
            api_key_env_var="GOOGLE_API_KEY",
            context_window_tokens=1_000_000,
            price_per_1m_input=1.25,
            price_per_1m_output=5.00,
        ),
        BackendConfig(
            backend_id="llama-3",
            provider_kind=ProviderKind.LLAMA,
            model_name="llama-3-8b-instruct",
            endpoint_url="http://localhost:8080/v1/chat/completions",
            api_key_env_var="LLAMA_API_KEY",
            context_window_tokens=8_192,
            price_per_1m_input=0.0,
            price_per_1m_output=0.0,
        ),
        BackendConfig(backend_id="extractor", provider_kind=ProviderKind.EXTRACTOR),
        BackendConfig(backend_id="replay", provider_kind=ProviderKind.REPLAY),
    ]
    return {c.backend_id: c for c in configs}


@dataclass
class LlmResponse:
    text: str
    input_tokens: int = 0
    output_tokens: int = 0
    latency: float = 0.0
    failure: FailureKind | None = None

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
            "latency": self.latency,
            "failure": self.failure.value if self.failure else None,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "LlmResponse":
        failure = payload.get("failure")
        return cls(
            text=payload["text"],
            input_tokens=payload.get("input_tokens", 0),
            output_tokens=payload.get("output_tokens", 0),
            latency=payload.get("latency", 0.0),
            failure=FailureKind(failure) if failure else None,
        )


def billed_cost_microusd(response: LlmResponse, config: BackendConfig) -> float:
    """Token cost in micro-dollars.

    Prices are quoted in dollars per 1M tokens, which is numerically the
    same as micro-dollars per token, so no division is needed.
    """
    return (
        response.input_tokens * config.price_per_1m_input
        + response.output_tokens * config.price_per_1m_output
    )


def transcript_key(backend_id: str, prompt_text: str) -> str:
    digest = hashlib.sha256()
    digest.update(backend_id.encode("utf-8"))
    digest.update(b"\n")
    digest.update(prompt_text.encode("utf-8"))
    return digest.hexdigest()


@dataclass
class Transcript:
    key: str
    response: LlmResponse
    recorded_at: str


class TranscriptStore:
    """Append-ordered transcript log with serialized writes.

    Recording the same key with an identical payload is a no-op; a changed
    payload for an existing key replaces it (latest wins on load as well).
    """

    def __init__(self) -> None:
        self._entries: list[Transcript] = []
        self._by_key: dict[str, Transcript] = {}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._by_key)

    def record(self, key: str, response: LlmResponse, recorded_at: str | None = None) -> Transcript:
        with self._lock:
            existing = self._by_key.get(key)
            if existing is not None and existing.response == response:
                return existing
            entry = Transcript(
                key=key,
                response=response,
                recorded_at=recorded_at
                or datetime.now(timezone.utc).isoformat(timespec="seconds"),
            )
            self._entries.append(entry)
            self._by_key[key] = entry
            return entry

    def replay(self, key: str) -> LlmResponse:
        entry = self._by_key.get(key)
        if entry is None:
            raise ReplayMiss(key)
        return entry.response

    def save(self, path: str | Path, backend_id: str = "") -> None:
        payload = {
            "format_version": TRANSCRIPT_FORMAT_VERSION,
            "backend_id": backend_id,
            "entries": [
                {"key": e.key, "response": e.response.to_dict(), "recorded_at": e.recorded_at}
                for e in self._entries
            ],
        }
        Path(path).write_text(json.dumps(payload, indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "TranscriptStore":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        version = payload.get("format_version")
        if version != TRANSCRIPT_FORMAT_VERSION:
            raise ValueError(f"unsupported transcript format version {version!r}")
        store = cls()
        for entry in payload["entries"]:
            store.record(
                entry["key"],
                LlmResponse.from_dict(entry["response"]),
                recorded_at=entry["recorded_at"],
            )
        return store


def _context_records(prompt_text: str) -> dict[str, dict]:
    """Chunk JSON objects embedded in the prompt, keyed by CVE ID."""
    records: dict[str, dict] = {}
    for line in prompt_text.splitlines():
        line = line.strip()
        if not (line.startswith("{") and line.endswith("}")):
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict) and "cve_id" in obj:
            records[str(obj["cve_id"]).upper()] = obj
    return records


def _question_section(prompt_text: str) -> str:
    q = prompt_text.rfind("Question:")
    a = prompt_text.rfind("Answer:")
    if 0 <= q < a:
        return prompt_text[q:a]
    return prompt_text


def extractor_complete(prompt: AssembledPrompt) -> LlmResponse:
    """Deterministic, context-only answerer.

    Classifies the question by field keyword plus the CVE ID it mentions
    and replies with that record's exact field value. Anything it cannot
    find in the provided context yields empty text, which the judge then
    classifies as an omission.
    """
    started = time.perf_counter()
    records = _context_records(prompt.text)
    question = _question_section(prompt.text)
    question_lower = question.lower()

    answer = ""
    mention = _CVE_MENTION_RE.search(question)
    if mention:
        record = records.get(mention.group(0).upper())
        if record:
            for keyword, field_name in _QUESTION_FIELD_KEYWORDS:
                if keyword in question_lower:
                    value = record.get(field_name)
                    if isinstance(value, (int, float)) and not isinstance(value, bool):
                        answer = format_score(float(value))
                    elif isinstance(value, str):
                        answer = value
                    break

    return LlmResponse(
        text=answer,
        input_tokens=prompt.token_estimate,
        output_tokens=estimate_tokens(answer),
        latency=time.perf_counter() - started,
    )


# transport(config, prompt_text, api_key) -> (text, input_tokens, output_tokens)
# Token counts are None when the provider response carries no usage data.
# Raises TimeoutError, TransportError, or ProviderStatusError.
Transport = Callable[[BackendConfig, str, str], tuple[str, int | None, int | None]]


def _http_transport(config: BackendConfig, prompt_text: str, api_key: str) -> tuple[str, int | None, int | None]:
    if config.provider_kind is ProviderKind.GEMINI:
        url = f"{config.endpoint_url}/models/{config.model_name}:generateContent?key={api_key}"
        headers = {"Content-Type": "application/json"}
        payload = {"contents": [{"parts": [{"text": prompt_text}]}]}
    else:
        # OpenAI-compatible chat completions; hosted llama endpoints speak
        # the same shape.
        url = config.endpoint_url
        headers = {"Authorization": f"Bearer {api_key}", "Content-Type": "application/json"}
        payload = {
            "model": config.model_name,
            "messages": [{"role": "user", "content": prompt_text}],
        }
    try:
        resp = requests.post(url, headers=headers, json=payload, timeout=config.timeout)
    except requests.Timeout as exc:
        raise TimeoutError(str(exc)) from exc
    except requests.RequestException as exc:
        raise TransportError(str(exc)) from exc
    if resp.status_code >= 400:
        raise ProviderStatusError(resp.status_code, resp.text[:500])

    body = resp.json()
    if config.provider_kind is ProviderKind.GEMINI:
        parts = body["candidates"][0]["content"]["parts"]
        text = "".join(p.get("text", "") for p in parts)
        usage = body.get("usageMetadata", {})
        return text, usage.get("promptTokenCount"), usage.get("candidatesTokenCount")
    text = body["choices"][0]["message"]["content"]
    usage = body.get("usage", {})
    return text, usage.get("prompt_tokens"), usage.get("completion_tokens")


# Seam for tests; retry backoff sleeps through this.
_sleep = time.sleep

_semaphores: dict[str, threading.BoundedSemaphore] = {}
_semaphores_lock = threading.Lock()


def _backend_semaphore(config: BackendConfig) -> threading.BoundedSemaphore:
    with _semaphores_lock:
        sem = _semaphores.get(config.backend_id)
        if sem is None:
            sem = threading.BoundedSemaphore(max(1, config.max_concurrency))
            _semaphores[config.backend_id] = sem
        return sem


def _remote_complete(
    config: BackendConfig,
    prompt: AssembledPrompt,
    transport: Transport,
) -> LlmResponse:
    api_key = os.environ.get(config.api_key_env_var, "") if config.api_key_env_var else ""
    started = time.perf_counter()
    if config.api_key_env_var and not api_key:
        return LlmResponse(
            text="",
            input_tokens=prompt.token_estimate,
            latency=time.perf_counter() - started,
            failure=FailureKind.PROVIDER_ERROR,
        )

    semaphore = _backend_semaphore(config)
    failure = FailureKind.TRANSPORT
    for attempt in range(config.max_retries + 1):
        try:
            with semaphore:
                text, in_tokens, out_tokens = transport(config, prompt.text, api_key)
            return LlmResponse(
                text=text,
                input_tokens=in_tokens if in_tokens is not None else prompt.token_estimate,
                output_tokens=out_tokens if out_tokens is not None else estimate_tokens(text),
                latency=time.perf_counter() - started,
            )
        except TimeoutError:
            failure = FailureKind.TIMEOUT
        except TransportError:
            failure = FailureKind.TRANSPORT
        except ProviderStatusError as exc:
            failure = FailureKind.PROVIDER_ERROR
            if exc.status < 500:
                break  # 4xx-class causes are never retried
        if attempt < config.max_retries:
            _sleep(2.0 ** attempt)  # 1s / 2s / 4s backoff
    return LlmResponse(
        text="",
        input_tokens=prompt.token_estimate,
        latency=time.perf_counter() - started,
        failure=failure,
    )


def complete(
    config: BackendConfig,
    prompt: AssembledPrompt,
    store: TranscriptStore | None = None,
    transport: Transport | None = None,
) -> LlmResponse:
    """Run one prompt against a backend; failures never escape as exceptions.

    The context-window check happens strictly before any network attempt.
    When a transcript store is supplied, replay backends read from it and
    every other kind records into it; a replay miss surfaces as a
    provider-error failure rather than an exception.
    """
    if prompt.token_estimate > config.context_window_tokens:
        return LlmResponse(
            text="",
            input_tokens=prompt.token_estimate,
            latency=0.0,
            failure=FailureKind.CONTEXT_OVERFLOW,
        )

    if config.provider_kind is ProviderKind.REPLAY:
        key = transcript_key(config.backend_id, prompt.text)
        if store is None:
            return LlmResponse(text="", input_tokens=prompt.token_estimate, failure=FailureKind.PROVIDER_ERROR)
        try:
            return store.replay(key)
        except ReplayMiss:
            return LlmResponse(text="", input_tokens=prompt.token_estimate, failure=FailureKind.PROVIDER_ERROR)

    if config.provider_kind is ProviderKind.EXTRACTOR:
        response = extractor_complete(prompt)
    else:
        response = _remote_complete(config, prompt, transport or _http_transport)

    if store is not None:
        store.record(transcript_key(config.backend_id, prompt.text), response)
    return response
