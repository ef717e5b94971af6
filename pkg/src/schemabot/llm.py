"""LLM backends behind one completion contract.

The engine never talks to a provider directly; it calls
`complete(backend, request)`. Backends include a remote HTTP provider
(chat- or text-style JSON API) and deterministic local ones for tests:
a sequential script, a prompt-hash map, and a rule callable. No other
module performs network I/O.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass

import httpx

from .errors import AuthFailure, ConfigError, ProviderError, RateLimited, Timeout

ENV_API_KEY = "LLM_API_KEY"
ENV_BASE_URL = "LLM_BASE_URL"
ENV_MODEL_ID = "LLM_MODEL_ID"


@dataclass
class LlmBackendConfig:
    """Connection and sampling settings for a remote provider."""

    model_id: str = "gpt-3.5-turbo"
    temperature: float = 0.5
    max_tokens: int = 256
    timeout: float = 30.0
    base_url: str = ""
    api_key_env: str = ENV_API_KEY
    api_style: str = "chat"  # "chat" or "text"
    stop: tuple[str, ...] = ("\n\n",)
    max_retries: int = 3
    backoff_base: float = 0.5
    max_in_flight: int = 4

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be within [0, 2]")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.api_style not in ("chat", "text"):
            raise ValueError("api_style must be 'chat' or 'text'")

    @classmethod
    def from_env(cls, **overrides) -> "LlmBackendConfig":
        env = {
            "model_id": os.environ.get(ENV_MODEL_ID, cls.model_id),
            "base_url": os.environ.get(ENV_BASE_URL, ""),
        }
        env.update(overrides)
        return cls(**env)


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    temperature: float | None = None
    max_tokens: int | None = None


@dataclass(frozen=True)
class CompletionResult:
    """Exactly what the provider returned, untrimmed, plus bookkeeping."""

    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    latency_s: float = 0.0
    retries: int = 0


def complete(backend, request: CompletionRequest) -> CompletionResult:
    """Run one completion; the single entry point used by the pipeline."""
    if not request.prompt:
        raise ValueError("prompt must be non-empty")
    return backend.complete(request)


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class ScriptedBackend:
    """Replays a fixed list of completions in order; records every prompt."""

    def __init__(self, script):
        script = list(script)
        if not script:
            raise ValueError("script must be non-empty")
        self._script = script
        self._next = 0
        self._lock = threading.Lock()
        self.prompts: list[str] = []

    def complete(self, request: CompletionRequest) -> CompletionResult:
        with self._lock:
            self.prompts.append(request.prompt)
            if self._next >= len(self._script):
                raise ProviderError("script exhausted")
            text = self._script[self._next]
            self._next += 1
        return CompletionResult(text=text)

    def remaining(self) -> int:
        return len(self._script) - self._next


class PromptHashBackend:
    """Completions keyed by sha256 of the exact prompt text."""

    def __init__(self, mapping: dict[str, str]):
        if not mapping:
            raise ValueError("script must be non-empty")
        self._mapping = dict(mapping)
        self._lock = threading.Lock()
        self.prompts: list[str] = []

    def complete(self, request: CompletionRequest) -> CompletionResult:
        key = prompt_hash(request.prompt)
        with self._lock:
            self.prompts.append(request.prompt)
        try:
            text = self._mapping[key]
        except KeyError:
            nearest = min(self._mapping, key=lambda h: (_hash_distance(h, key), h))
            raise ProviderError(
                f"no completion for prompt hash {key[:16]}…; nearest known hash {nearest[:16]}…"
            ) from None
        return CompletionResult(text=text)


def _hash_distance(a: str, b: str) -> int:
    # shared-prefix distance: deterministic and cheap
    n = 0
    for x, y in zip(a, b):
        if x != y:
            break
        n += 1
    return -n


class CallableBackend:
    """Adapts a prompt -> completion function; handy for rule-based fakes."""

    def __init__(self, fn):
        self._fn = fn
        self._lock = threading.Lock()
        self.prompts: list[str] = []

    def complete(self, request: CompletionRequest) -> CompletionResult:
        with self._lock:
            self.prompts.append(request.prompt)
        return CompletionResult(text=self._fn(request.prompt))


def scripted_backend(script):
    """Build a deterministic replay backend.

    Accepts an ordered list of completions or a map of prompt hash ->
    completion for order-independent replay.
    """
    if isinstance(script, dict):
        return PromptHashBackend(script)
    return ScriptedBackend(script)


class HttpBackend:
    """Remote completion provider over HTTP JSON.

    Sends {model, prompt|messages, temperature, max_tokens, stop} to the
    configured URL and retries transient failures (429, 5xx, timeouts)
    with exponential backoff. Credentials come only from the
    environment, never from config files.
    """

    RETRIABLE = (429, 500, 502, 503, 504, 408)

    def __init__(self, config: LlmBackendConfig, client: httpx.Client | None = None):
        if not config.base_url:
            raise ConfigError(f"base_url is required (set {ENV_BASE_URL})")
        self.config = config
        self._client = client or httpx.Client(timeout=config.timeout)
        self._slots = threading.Semaphore(config.max_in_flight)

    def _body(self, request: CompletionRequest) -> dict:
        cfg = self.config
        body = {
            "model": cfg.model_id,
            "temperature": request.temperature if request.temperature is not None else cfg.temperature,
            "max_tokens": request.max_tokens if request.max_tokens is not None else cfg.max_tokens,
            "stop": list(cfg.stop),
        }
        if cfg.api_style == "chat":
            body["messages"] = [{"role": "user", "content": request.prompt}]
        else:
            body["prompt"] = request.prompt
        return body

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.config.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _extract_text(self, payload: dict) -> str:
        try:
            choice = payload["choices"][0]
            if self.config.api_style == "chat":
                return choice["message"]["content"]
            return choice["text"]
        except (KeyError, IndexError, TypeError):
            raise ProviderError(f"malformed provider payload: {json.dumps(payload)[:200]}") from None

    def complete(self, request: CompletionRequest) -> CompletionResult:
        cfg = self.config
        body = self._body(request)
        start = time.perf_counter()
        last_error: Exception | None = None
        with self._slots:
            for attempt in range(cfg.max_retries + 1):
                if attempt:
                    time.sleep(cfg.backoff_base * (2 ** (attempt - 1)))
                try:
                    response = self._client.post(cfg.base_url, json=body, headers=self._headers())
                except httpx.TimeoutException as e:
                    last_error = Timeout(str(e))
                    continue
                except httpx.TransportError as e:
                    last_error = ProviderError(f"transport failure: {e}")
                    continue
                if response.status_code in (401, 403):
                    raise AuthFailure(f"provider rejected credentials (HTTP {response.status_code})")
                if response.status_code in self.RETRIABLE:
                    last_error = (
                        RateLimited("rate limited")
                        if response.status_code == 429
                        else ProviderError("provider failure", status=response.status_code, body=response.text)
                    )
                    continue
                if response.status_code != 200:
                    raise ProviderError("provider error", status=response.status_code, body=response.text)
                payload = response.json()
                usage = payload.get("usage", {}) if isinstance(payload, dict) else {}
                return CompletionResult(
                    text=self._extract_text(payload),
                    prompt_tokens=int(usage.get("prompt_tokens", 0)),
                    completion_tokens=int(usage.get("completion_tokens", 0)),
                    latency_s=time.perf_counter() - start,
                    retries=attempt,
                )
        raise last_error if last_error is not None else ProviderError("retry budget exhausted")
