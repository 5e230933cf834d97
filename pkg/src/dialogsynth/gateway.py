"""Chat-model access: HTTP chat-completion endpoints and the pool fan-out.

A "gateway" anywhere in this package is any object with an ``endpoint_id``
attribute and a ``complete(messages, params=None)`` method returning a
:class:`CandidateResponse`. :class:`HttpChatClient` and
:class:`dialogsynth.stub.StubChatClient` are the two implementations.
"""

from __future__ import annotations

import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol, Sequence

import httpx

from .jsonio import read_json

log = logging.getLogger(__name__)

FINISH_COMPLETE = "complete"
FINISH_LENGTH = "length_capped"
FINISH_ERROR = "error"
FINISH_REASONS = (FINISH_COMPLETE, FINISH_LENGTH, FINISH_ERROR)
ROLES = ("system", "user", "assistant")

DEFAULT_TEMPERATURE = 0.3
DEFAULT_TOP_P = 0.95
DEFAULT_MAX_TOKENS = 2048
MAX_ATTEMPTS = 3


@dataclass(frozen=True)
class SamplingParams:
    temperature: float | None = None
    top_p: float | None = None
    max_tokens: int | None = None
    seed: int | None = None


@dataclass(frozen=True)
class ModelEndpoint:
    id: str
    base_url: str
    model: str = ""
    token_env: str | None = None
    temperature: float = DEFAULT_TEMPERATURE
    top_p: float = DEFAULT_TOP_P
    max_tokens: int = DEFAULT_MAX_TOKENS
    timeout: float = 60.0
    max_in_flight: int = 4
    stub: Mapping[str, Any] | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("endpoint id must be non-empty")
        if not 0 <= self.temperature <= 2:
            raise ValueError(f"{self.id}: temperature {self.temperature} outside [0, 2]")
        if not 0 < self.top_p <= 1:
            raise ValueError(f"{self.id}: top_p {self.top_p} outside (0, 1]")
        if self.max_tokens < 1:
            raise ValueError(f"{self.id}: max_tokens must be positive")

    @property
    def is_stub(self) -> bool:
        return self.base_url.startswith("stub:")

    def resolve(self, params: SamplingParams | None) -> SamplingParams:
        """Per-call params with the endpoint defaults filled in."""
        p = params or SamplingParams()
        return SamplingParams(
            temperature=self.temperature if p.temperature is None else p.temperature,
            top_p=self.top_p if p.top_p is None else p.top_p,
            max_tokens=self.max_tokens if p.max_tokens is None else p.max_tokens,
            seed=p.seed,
        )

    def public_dict(self) -> dict[str, Any]:
        """Serializable view; carries the env var name, never the token."""
        d = asdict(self)
        d["stub"] = dict(self.stub) if self.stub is not None else None
        return d

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ModelEndpoint":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"endpoint {data.get('id')!r}: unknown field(s) {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class CandidateResponse:
    endpoint_id: str
    text: str
    finish_reason: str
    latency: float = 0.0
    prompt_tokens: int | None = None
    completion_tokens: int | None = None
    error: str | None = None

    def __post_init__(self) -> None:
        if self.finish_reason not in FINISH_REASONS:
            raise ValueError(f"finish reason {self.finish_reason!r} not in {FINISH_REASONS}")
        if not self.text and self.finish_reason != FINISH_ERROR:
            raise ValueError("empty text is only allowed with finish reason 'error'")

    @property
    def ok(self) -> bool:
        return self.finish_reason != FINISH_ERROR

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "CandidateResponse":
        return cls(**data)

    @classmethod
    def failed(cls, endpoint_id: str, cause: str, latency: float = 0.0) -> "CandidateResponse":
        return cls(endpoint_id, "", FINISH_ERROR, latency=latency, error=cause)


class Gateway(Protocol):
    endpoint_id: str

    def complete(self, messages: Sequence[Mapping[str, str]], params: SamplingParams | None = None) -> CandidateResponse: ...


def check_messages(messages: Sequence[Mapping[str, str]]) -> None:
    if not messages:
        raise ValueError("messages must be non-empty")
    for m in messages:
        if m.get("role") not in ROLES:
            raise ValueError(f"role {m.get('role')!r} not in {ROLES}")
        if not isinstance(m.get("content"), str):
            raise ValueError("message content must be a string")


class _RetryableError(Exception):
    pass


class HttpChatClient:
    """OpenAI-style ``/chat/completions`` client with bounded retries."""

    def __init__(
        self,
        endpoint: ModelEndpoint,
        transport: httpx.BaseTransport | None = None,
        backoff: float = 0.5,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.endpoint = endpoint
        self.endpoint_id = endpoint.id
        self.backoff = backoff
        self.sleep = sleep
        self.attempts_made = 0
        headers = {"Content-Type": "application/json"}
        if endpoint.token_env:
            token = os.environ.get(endpoint.token_env)
            if token:
                headers["Authorization"] = f"Bearer {token}"
        self._http = httpx.Client(timeout=endpoint.timeout, headers=headers, transport=transport)
        self._slots = threading.BoundedSemaphore(max(1, endpoint.max_in_flight))

    @property
    def url(self) -> str:
        base = self.endpoint.base_url.rstrip("/")
        return base if base.endswith("/chat/completions") else base + "/chat/completions"

    def payload(self, messages: Sequence[Mapping[str, str]], params: SamplingParams | None) -> dict[str, Any]:
        p = self.endpoint.resolve(params)
        body: dict[str, Any] = {
            "model": self.endpoint.model,
            "messages": [{"role": m["role"], "content": m["content"]} for m in messages],
            "temperature": p.temperature,
            "top_p": p.top_p,
            "max_tokens": p.max_tokens,
        }
        if p.seed is not None:
            body["seed"] = p.seed
        return body

    def complete(self, messages: Sequence[Mapping[str, str]], params: SamplingParams | None = None) -> CandidateResponse:
        check_messages(messages)
        body = self.payload(messages, params)
        started = time.monotonic()
        cause = "no attempt made"
        with self._slots:
            for attempt in range(MAX_ATTEMPTS):
                if attempt:
                    self.sleep(self.backoff * 2 ** (attempt - 1))
                self.attempts_made += 1
                try:
                    return self._once(body, started)
                except _RetryableError as exc:
                    cause = str(exc)
                except httpx.HTTPStatusError as exc:
                    cause = f"HTTP {exc.response.status_code}"
                    break
                except (ValueError, KeyError, IndexError, TypeError) as exc:
                    cause = f"malformed response: {exc}"
                    break
        log.warning("endpoint %s failed: %s", self.endpoint_id, cause)
        return CandidateResponse.failed(self.endpoint_id, cause, time.monotonic() - started)

    def _once(self, body: dict[str, Any], started: float) -> CandidateResponse:
        try:
            resp = self._http.post(self.url, json=body)
        except httpx.TimeoutException as exc:
            raise _RetryableError(f"timeout: {type(exc).__name__}") from None
        except httpx.TransportError as exc:
            raise _RetryableError(f"transport error: {type(exc).__name__}: {exc}") from None
        if resp.status_code >= 500:
            raise _RetryableError(f"HTTP {resp.status_code}")
        resp.raise_for_status()
        data = resp.json()
        choice = data["choices"][0]
        text = choice["message"].get("content") or ""
        raw_finish = choice.get("finish_reason")
        usage = data.get("usage") or {}
        latency = time.monotonic() - started
        if not text:
            return CandidateResponse.failed(self.endpoint_id, "empty completion", latency)
        finish = FINISH_LENGTH if raw_finish in ("length", "max_tokens") else FINISH_COMPLETE
        return CandidateResponse(
            self.endpoint_id,
            text,
            finish,
            latency=latency,
            prompt_tokens=usage.get("prompt_tokens"),
            completion_tokens=usage.get("completion_tokens"),
        )

    def close(self) -> None:
        self._http.close()


def connect(endpoint: ModelEndpoint, **kwargs: Any) -> Gateway:
    """Client for ``endpoint``: stub backend for ``stub:`` URLs, HTTP otherwise."""
    if endpoint.is_stub:
        from .stub import StubChatClient

        return StubChatClient(endpoint)
    return HttpChatClient(endpoint, **kwargs)


def complete(
    endpoint: ModelEndpoint | Gateway,
    messages: Sequence[Mapping[str, str]],
    params: SamplingParams | None = None,
) -> CandidateResponse:
    client = connect(endpoint) if isinstance(endpoint, ModelEndpoint) else endpoint
    return client.complete(messages, params)


def generate_candidates(
    pool: Sequence[Gateway],
    messages: Sequence[Mapping[str, str]],
    params: SamplingParams | None = None,
) -> list[CandidateResponse]:
    """One candidate per pool member, in pool order; failures become error candidates."""
    if not pool:
        raise ValueError("pool must be non-empty")

    def call(client: Gateway) -> CandidateResponse:
        try:
            return client.complete(messages, params)
        except Exception as exc:  # a broken member must not sink the batch
            return CandidateResponse.failed(client.endpoint_id, f"{type(exc).__name__}: {exc}")

    if len(pool) == 1:
        return [call(pool[0])]
    with ThreadPoolExecutor(max_workers=len(pool)) as ex:
        return list(ex.map(call, pool))


@dataclass
class PoolConfig:
    """Endpoints by role. ``assistant`` answers inside simulated sessions,
    ``helper`` runs classification and query synthesis, ``judge`` scores."""

    generators: list[ModelEndpoint]
    judge: ModelEndpoint | None = None
    assistant: ModelEndpoint | None = None
    helper: ModelEndpoint | None = None
    clients: dict[str, Gateway] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if not self.generators:
            raise ValueError("pool needs at least one generator endpoint")
        ids = [e.id for e in self.generators]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate endpoint ids in pool: {ids}")

    def client(self, endpoint: ModelEndpoint) -> Gateway:
        if endpoint.id not in self.clients:
            self.clients[endpoint.id] = connect(endpoint)
        return self.clients[endpoint.id]

    def generator_clients(self) -> list[Gateway]:
        return [self.client(e) for e in self.generators]

    def assistant_client(self) -> Gateway:
        return self.client(self.assistant or self.generators[0])

    def helper_client(self) -> Gateway:
        return self.client(self.helper or self.judge or self.generators[0])

    def judge_client(self) -> Gateway:
        if self.judge is None:
            raise ValueError("pool config has no judge endpoint")
        return self.client(self.judge)

    def swap_generators(self, generators: Sequence[ModelEndpoint]) -> "PoolConfig":
        """New pool with replaced generators, e.g. after retraining them."""
        return replace(self, generators=list(generators), clients={})

    def to_dict(self) -> dict[str, Any]:
        return {
            "generators": [e.public_dict() for e in self.generators],
            "judge": self.judge.public_dict() if self.judge else None,
            "assistant": self.assistant.public_dict() if self.assistant else None,
            "helper": self.helper.public_dict() if self.helper else None,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "PoolConfig":
        def one(key: str) -> ModelEndpoint | None:
            return ModelEndpoint.from_dict(data[key]) if data.get(key) else None

        return cls(
            generators=[ModelEndpoint.from_dict(e) for e in data.get("generators", [])],
            judge=one("judge"),
            assistant=one("assistant"),
            helper=one("helper"),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "PoolConfig":
        return cls.from_dict(read_json(path))


def stub_pool(n_generators: int = 3, **stub_options: Any) -> PoolConfig:
    """All-stub pool for offline runs and tests."""
    gens = [
        ModelEndpoint(id=f"stub-gen-{i}", base_url="stub://", model=f"stub-{i}", stub=dict(stub_options))
        for i in range(n_generators)
    ]
    return PoolConfig(
        generators=gens,
        judge=ModelEndpoint(id="stub-judge", base_url="stub://", model="stub-judge", stub=dict(stub_options)),
        assistant=ModelEndpoint(id="stub-assistant", base_url="stub://", model="stub-assistant", stub=dict(stub_options)),
        helper=ModelEndpoint(id="stub-helper", base_url="stub://", model="stub-helper", stub=dict(stub_options)),
    )
