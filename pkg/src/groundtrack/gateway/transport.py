"""Wire transports: real JSON-over-HTTP and a deterministic in-process mock.

Endpoints with a mock:// URL are served by in-process backends registered on
a MockTransport, so the whole engine runs offline with scripted latency and
fault injection. Both transports expose the same two calls.
"""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Protocol

import requests

from ..errors import MalformedResponse, ServiceUnavailable, TransportTimeout


class Transport(Protocol):
    def post(self, base_url: str, path: str, payload: dict, timeout_ms: int) -> dict: ...

    def health(self, base_url: str, timeout_ms: int) -> None: ...


class HttpTransport:
    """requests-based JSON transport with optional bearer auth from the env."""

    def __init__(self, api_key_env: str | None = None):
        self.api_key_env = api_key_env
        self._session = requests.Session()

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env, "")
            if key:
                headers["Authorization"] = f"Bearer {key}"
        return headers

    def post(self, base_url: str, path: str, payload: dict, timeout_ms: int) -> dict:
        url = base_url.rstrip("/") + path
        try:
            resp = self._session.post(
                url, json=payload, headers=self._headers(), timeout=timeout_ms / 1000.0
            )
        except requests.Timeout as exc:
            raise TransportTimeout(f"{url}: timed out after {timeout_ms} ms") from exc
        except requests.RequestException as exc:
            raise ServiceUnavailable(f"{url}: {exc}") from exc
        if resp.status_code != 200:
            raise ServiceUnavailable(f"{url}: HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()
        except ValueError as exc:
            raise MalformedResponse(f"{url}: non-JSON body: {resp.text[:200]}") from exc

    def health(self, base_url: str, timeout_ms: int) -> None:
        url = base_url.rstrip("/") + "/health"
        try:
            resp = self._session.get(url, timeout=timeout_ms / 1000.0)
        except requests.RequestException as exc:
            raise ServiceUnavailable(f"{url}: {exc}") from exc
        if resp.status_code != 200:
            raise ServiceUnavailable(f"{url}: HTTP {resp.status_code}")


@dataclass
class FaultScript:
    """Per-endpoint fault injection for tests and mock serving.

    mode "error" raises ServiceUnavailable, mode "timeout" raises
    TransportTimeout. fail_first applies the mode to the first N calls only;
    fail_always applies it to every call. latency_ms delays every call
    (also applied while failing), capped by the caller's timeout.
    """

    latency_ms: float = 0.0
    fail_first: int = 0
    fail_always: bool = False
    mode: str = "error"
    dead: bool = False
    _calls: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def next_outcome(self) -> str:
        with self._lock:
            self._calls += 1
            n = self._calls
        if self.dead or self.fail_always or n <= self.fail_first:
            return self.mode
        return "ok"

    @property
    def calls(self) -> int:
        with self._lock:
            return self._calls


Backend = Callable[[str, dict], dict]


class MockTransport:
    """Routes mock:// base URLs to in-process backends.

    Backends are plain functions (path, payload) -> response dict speaking the
    same wire shapes as the HTTP services, so tests exercise real payload
    construction and parsing.
    """

    def __init__(self):
        self._services: dict[str, tuple[Backend, FaultScript]] = {}

    def register(self, base_url: str, backend: Backend, faults: FaultScript | None = None):
        self._services[base_url] = (backend, faults or FaultScript())

    def script(self, base_url: str) -> FaultScript:
        return self._services[base_url][1]

    def _lookup(self, base_url: str) -> tuple[Backend, FaultScript]:
        if base_url not in self._services:
            raise ServiceUnavailable(f"{base_url}: no mock registered")
        return self._services[base_url]

    def post(self, base_url: str, path: str, payload: dict, timeout_ms: int) -> dict:
        backend, faults = self._lookup(base_url)
        outcome = faults.next_outcome()
        if faults.latency_ms > 0:
            delay = min(faults.latency_ms, timeout_ms) / 1000.0
            time.sleep(delay)
            if faults.latency_ms > timeout_ms:
                raise TransportTimeout(f"{base_url}{path}: exceeded {timeout_ms} ms")
        if outcome == "timeout":
            raise TransportTimeout(f"{base_url}{path}: scripted timeout")
        if outcome == "error":
            raise ServiceUnavailable(f"{base_url}{path}: scripted failure")
        return backend(path, payload)

    def health(self, base_url: str, timeout_ms: int) -> None:
        _backend, faults = self._lookup(base_url)
        if faults.dead:
            raise ServiceUnavailable(f"{base_url}/health: scripted dead")


class DispatchTransport:
    """Sends mock:// URLs to a MockTransport and everything else over HTTP."""

    def __init__(self, mock: MockTransport | None = None, api_key_env: str | None = None):
        self.mock = mock or MockTransport()
        self.http = HttpTransport(api_key_env=api_key_env)

    def _pick(self, base_url: str) -> Transport:
        return self.mock if base_url.startswith("mock://") else self.http

    def post(self, base_url: str, path: str, payload: dict, timeout_ms: int) -> dict:
        return self._pick(base_url).post(base_url, path, payload, timeout_ms)

    def health(self, base_url: str, timeout_ms: int) -> None:
        self._pick(base_url).health(base_url, timeout_ms)
