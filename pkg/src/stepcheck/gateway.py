"""Uniform access to chat-completion backends for all three model roles.

Two backends are provided: an HTTP backend speaking the de-facto
chat-completions JSON shape (any compatible provider or local server works),
and a scripted backend that replays a fixed list of completions for hermetic,
bit-deterministic runs.
"""

from __future__ import annotations

import json
import logging
import os
import random
import threading
import time
from dataclasses import dataclass
from typing import Callable, Optional, Protocol, Sequence

import httpx

from .core import Role, RunConfig, canonical_json
from .errors import AuthError, BackendUnavailable, InvalidRequest, ScriptExhausted

logger = logging.getLogger(__name__)

SPEAKERS = ("system", "user", "assistant")

DEFAULT_API_BASE = "https://api.openai.com/v1"
API_BASE_ENV = "STEPCHECK_API_BASE"
API_KEY_ENV = "STEPCHECK_API_KEY"

RETRY_ATTEMPTS = 3
BACKOFF_BASE_S = 1.0
BACKOFF_JITTER = 0.2


@dataclass(frozen=True)
class ChatMessage:
    speaker: str
    text: str

    def __post_init__(self) -> None:
        if self.speaker not in SPEAKERS:
            raise InvalidRequest(f"unknown speaker {self.speaker!r}")


@dataclass(frozen=True)
class ChatRequest:
    """A single chat call: who is asking (role) and what is sent."""

    role: Role
    messages: tuple[ChatMessage, ...]
    temperature: float
    max_tokens: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "messages", tuple(self.messages))
        if not self.messages:
            raise InvalidRequest("chat request needs at least one message")
        if self.messages[-1].speaker != "user":
            raise InvalidRequest("the last chat message must come from the user")

    @property
    def prompt(self) -> str:
        """Text of the final user message; what scripted tests assert on."""
        return self.messages[-1].text


@dataclass(frozen=True)
class Completion:
    text: str
    model_name: str
    token_usage: Optional[tuple[int, int]] = None


def user_request(role: Role, prompt: str, config: RunConfig) -> ChatRequest:
    """Each rendered prompt is sent as one user message."""
    return ChatRequest(
        role=role,
        messages=(ChatMessage("user", prompt),),
        temperature=config.temperature,
        max_tokens=config.max_tokens,
    )


class Backend(Protocol):
    deterministic: bool

    def send(self, request: ChatRequest, model_name: str) -> Completion: ...


class ScriptedBackend:
    """Replays a fixed script of completions, one entry per call, and records
    every request it receives so tests can assert on prompts and role order."""

    deterministic = True

    def __init__(self, script: Sequence[str]):
        if not script:
            raise ValueError("script must be non-empty")
        self._entries = list(script)
        self._pos = 0
        self._lock = threading.Lock()
        self.requests: list[ChatRequest] = []

    def send(self, request: ChatRequest, model_name: str) -> Completion:
        with self._lock:
            self.requests.append(request)
            if self._pos >= len(self._entries):
                raise ScriptExhausted(
                    f"script of {len(self._entries)} entries exhausted at call {self._pos + 1}"
                )
            entry = self._entries[self._pos]
            self._pos += 1
        return Completion(text=entry, model_name=model_name)

    @property
    def consumed(self) -> int:
        return self._pos

    @property
    def roles(self) -> list[Role]:
        return [r.role for r in self.requests]


def scripted_backend(script: Sequence[str]) -> ScriptedBackend:
    return ScriptedBackend(script)


class HttpBackend:
    """Chat-completions over HTTPS with bounded exponential-backoff retries.

    Transient failures (429, 5xx, timeouts) are retried up to the attempt
    limit; the request body is built once and re-sent byte-identically.
    """

    deterministic = False

    def __init__(
        self,
        api_base: Optional[str] = None,
        api_key: Optional[str] = None,
        client: Optional[httpx.Client] = None,
        attempts: int = RETRY_ATTEMPTS,
        sleep: Callable[[float], None] = time.sleep,
        rng: Optional[random.Random] = None,
    ):
        self._api_base = (api_base or os.environ.get(API_BASE_ENV) or DEFAULT_API_BASE).rstrip("/")
        self._api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self._client = client or httpx.Client(timeout=60.0)
        self._attempts = attempts
        self._sleep = sleep
        self._rng = rng or random.Random()

    def send(self, request: ChatRequest, model_name: str) -> Completion:
        if not self._api_key:
            raise AuthError(
                f"no API key; set {API_KEY_ENV}", role=request.role.value, attempts=0
            )
        body = canonical_json(
            {
                "model": model_name,
                "messages": [{"role": m.speaker, "content": m.text} for m in request.messages],
                "temperature": request.temperature,
                "max_tokens": request.max_tokens,
            }
        ).encode("utf-8")
        headers = {
            "Authorization": f"Bearer {self._api_key}",
            "Content-Type": "application/json",
        }
        url = f"{self._api_base}/chat/completions"

        last_reason = "no attempt made"
        for attempt in range(1, self._attempts + 1):
            try:
                response = self._client.post(url, content=body, headers=headers)
            except httpx.HTTPError as exc:
                last_reason = f"transport error: {exc}"
            else:
                if response.status_code in (401, 403):
                    raise AuthError(
                        f"credentials rejected (HTTP {response.status_code})",
                        role=request.role.value,
                        attempts=attempt,
                    )
                if response.status_code == 429 or response.status_code >= 500:
                    last_reason = f"HTTP {response.status_code}"
                elif response.status_code != 200:
                    raise BackendUnavailable(
                        f"unexpected HTTP {response.status_code}",
                        role=request.role.value,
                        attempts=attempt,
                    )
                else:
                    return self._parse(response, request, model_name, attempt)
            if attempt < self._attempts:
                delay = BACKOFF_BASE_S * (2 ** (attempt - 1))
                delay *= 1 + self._rng.uniform(-BACKOFF_JITTER, BACKOFF_JITTER)
                logger.debug("retrying %s after %s (%.2fs)", request.role.value, last_reason, delay)
                self._sleep(delay)
        raise BackendUnavailable(last_reason, role=request.role.value, attempts=self._attempts)

    def _parse(
        self, response: httpx.Response, request: ChatRequest, model_name: str, attempt: int
    ) -> Completion:
        try:
            payload = response.json()
            choice = payload["choices"][0]["message"]
        except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
            raise BackendUnavailable(
                f"malformed completion response: {exc}",
                role=request.role.value,
                attempts=attempt,
            ) from exc
        usage = payload.get("usage") or {}
        token_usage = None
        if "prompt_tokens" in usage and "completion_tokens" in usage:
            token_usage = (usage["prompt_tokens"], usage["completion_tokens"])
        # Empty content is surfaced as-is; downstream parsers decide what to do.
        return Completion(
            text=choice.get("content") or "",
            model_name=payload.get("model", model_name),
            token_usage=token_usage,
        )


class Gateway:
    """Resolves the model for each role and forwards requests to the backend.

    Safe for concurrent use: per-call state lives on the stack, and the
    scripted backend serializes its own pops.
    """

    def __init__(self, backend: Backend, config: RunConfig):
        self._backend = backend
        self._config = config

    @property
    def deterministic(self) -> bool:
        return getattr(self._backend, "deterministic", False)

    def complete(self, request: ChatRequest) -> Completion:
        if not request.messages:
            raise InvalidRequest("chat request needs at least one message")
        return self._backend.send(request, self._config.model_for(request.role))
