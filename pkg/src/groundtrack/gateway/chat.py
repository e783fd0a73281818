"""Chat-completion client: request/response types, retrying single calls,
and bounded-concurrency fan-out.
"""

from __future__ import annotations

import base64
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence, Union

from ..errors import (
    AllEndpointsFailed,
    GatewayError,
    MalformedResponse,
    NoHealthyEndpoint,
    ServiceUnavailable,
    TransportTimeout,
)
from .pool import EndpointPool
from .transport import Transport

CHAT_PATH = "/v1/chat/completions"


@dataclass(frozen=True)
class TextPart:
    text: str


@dataclass(frozen=True)
class ImagePart:
    data: bytes
    media_type: str = "image/png"

    def __post_init__(self):
        if not self.data:
            raise ValueError("image payload must be non-empty")


Part = Union[TextPart, ImagePart]


@dataclass(frozen=True)
class Message:
    role: str
    parts: tuple[Part, ...]


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[Message, ...]
    model: str
    temperature: float = 0.0
    max_tokens: int = 4096

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")
        system = sum(1 for m in self.messages if m.role == "system")
        users = sum(1 for m in self.messages if m.role == "user")
        if system > 1:
            raise ValueError("at most one system message allowed")
        if users < 1:
            raise ValueError("at least one user message required")

    @classmethod
    def build(
        cls,
        user_parts: Sequence[Part],
        model: str,
        system: str | None = None,
        temperature: float = 0.0,
        max_tokens: int = 4096,
    ) -> "ChatRequest":
        messages = []
        if system:
            messages.append(Message(role="system", parts=(TextPart(system),)))
        messages.append(Message(role="user", parts=tuple(user_parts)))
        return cls(
            messages=tuple(messages),
            model=model,
            temperature=temperature,
            max_tokens=max_tokens,
        )

    def to_wire(self) -> dict:
        messages = []
        for msg in self.messages:
            content = []
            for part in msg.parts:
                if isinstance(part, TextPart):
                    content.append({"type": "text", "text": part.text})
                else:
                    payload = base64.b64encode(part.data).decode("ascii")
                    content.append(
                        {
                            "type": "image_url",
                            "image_url": {"url": f"data:{part.media_type};base64,{payload}"},
                        }
                    )
            messages.append({"role": msg.role, "content": content})
        return {
            "model": self.model,
            "messages": messages,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }


@dataclass(frozen=True)
class ChatResponse:
    text: str
    prompt_tokens: int
    completion_tokens: int
    latency_ms: float
    endpoint: str
    attempts: tuple = ()  # per-attempt diagnostics, final success included


def _parse_chat_body(body: dict) -> tuple[str, int, int]:
    try:
        text = body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise MalformedResponse(f"chat response missing choices/message: {exc}") from None
    if not isinstance(text, str):
        raise MalformedResponse(f"chat content is {type(text).__name__}, expected str")
    usage = body.get("usage") or {}
    return text, int(usage.get("prompt_tokens", 0)), int(usage.get("completion_tokens", 0))


def chat_complete(pool: EndpointPool, transport: Transport, request: ChatRequest) -> ChatResponse:
    """Send one chat request, failing over across the pool.

    Issues at most 1 + pool.max_retries attempts. Timeouts and transport
    errors mark the endpoint dead and move on; when every endpoint is dead,
    remaining attempts are spent probing for a recovery. Raises
    AllEndpointsFailed with the per-attempt log once the budget is gone.
    """
    wire = request.to_wire()
    attempts: list[dict] = []
    budget = 1 + pool.max_retries
    for attempt in range(budget):
        try:
            index = pool.route()
        except NoHealthyEndpoint:
            revived = pool.probe_dead(transport)
            if not revived:
                attempts.append(
                    {"attempt": attempt + 1, "endpoint": None, "error": "no healthy endpoint; probes failed"}
                )
                continue
            index = pool.route()
        url = pool.url_of(index)
        pool.acquire(index)
        start = time.perf_counter()
        try:
            body = transport.post(url, CHAT_PATH, wire, pool.timeout_ms)
        except (TransportTimeout, ServiceUnavailable) as exc:
            elapsed = (time.perf_counter() - start) * 1000.0
            pool.mark_failure(index)
            attempts.append(
                {
                    "attempt": attempt + 1,
                    "endpoint": url,
                    "error": f"{type(exc).__name__}: {exc}",
                    "latency_ms": elapsed,
                }
            )
            continue
        except MalformedResponse as exc:
            pool.mark_failure(index)
            attempts.append(
                {"attempt": attempt + 1, "endpoint": url, "error": f"MalformedResponse: {exc}"}
            )
            raise MalformedResponse(str(exc), attempts=attempts)
        finally:
            pool.release(index)
        elapsed = (time.perf_counter() - start) * 1000.0
        try:
            text, p_tokens, c_tokens = _parse_chat_body(body)
        except MalformedResponse as exc:
            attempts.append(
                {"attempt": attempt + 1, "endpoint": url, "error": f"MalformedResponse: {exc}"}
            )
            raise MalformedResponse(str(exc), attempts=attempts)
        pool.mark_success(index)
        attempts.append(
            {"attempt": attempt + 1, "endpoint": url, "latency_ms": elapsed, "ok": True}
        )
        return ChatResponse(
            text=text,
            prompt_tokens=p_tokens,
            completion_tokens=c_tokens,
            latency_ms=elapsed,
            endpoint=url,
            attempts=tuple(attempts),
        )
    raise AllEndpointsFailed(
        f"all {budget} attempts failed", attempts=attempts
    )


FanOutResult = Union[ChatResponse, GatewayError]


def fan_out(
    pool: EndpointPool,
    transport: Transport,
    requests: Sequence[ChatRequest],
    max_concurrency: int,
) -> list[FanOutResult]:
    """Dispatch many chat requests with at most max_concurrency in flight.

    The result list is aligned with the input: slot i holds either the
    ChatResponse for requests[i] or the GatewayError it ended with. Never
    aborts early on per-slot failures.
    """
    if max_concurrency < 1:
        raise ValueError("max_concurrency must be >= 1")
    if not requests:
        return []

    def run_one(req: ChatRequest) -> FanOutResult:
        try:
            return chat_complete(pool, transport, req)
        except GatewayError as exc:
            return exc

    with ThreadPoolExecutor(max_workers=max_concurrency) as executor:
        return list(executor.map(run_one, requests))
