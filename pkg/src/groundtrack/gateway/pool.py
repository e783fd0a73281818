"""Load-balancing endpoint pool.

Routing policy: among healthy endpoints, pick the one with the fewest
in-flight requests scaled by its weight; break ties round-robin over the
declaration order. Failures mark an endpoint dead passively; dead endpoints
receive no requests until a health probe succeeds.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from enum import Enum

from ..errors import NoHealthyEndpoint

DEFAULT_TIMEOUT_MS = 10_000


class Health(Enum):
    HEALTHY = "healthy"
    DRAINING = "draining"
    DEAD = "dead"


@dataclass
class _EndpointState:
    url: str
    weight: int = 1
    health: Health = Health.HEALTHY
    in_flight: int = 0
    failures: int = 0
    last_probe: float = 0.0

    def __post_init__(self):
        if self.weight < 1:
            raise ValueError(f"endpoint weight must be positive, got {self.weight}")


@dataclass
class EndpointPool:
    """Shared, thread-safe state for one service role's endpoints."""

    endpoints: list[_EndpointState]
    timeout_ms: int = DEFAULT_TIMEOUT_MS
    max_retries: int = 1
    probe_interval_s: float = 5.0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)
    _rr: int = 0

    @classmethod
    def from_urls(
        cls,
        urls: list[str] | list[tuple[str, int]],
        timeout_ms: int = DEFAULT_TIMEOUT_MS,
        max_retries: int = 1,
    ) -> "EndpointPool":
        if not urls:
            raise ValueError("at least one endpoint must be configured")
        states = []
        for entry in urls:
            if isinstance(entry, str):
                states.append(_EndpointState(url=entry))
            else:
                url, weight = entry
                states.append(_EndpointState(url=url, weight=int(weight)))
        return cls(endpoints=states, timeout_ms=timeout_ms, max_retries=max_retries)

    def __len__(self) -> int:
        return len(self.endpoints)

    def url_of(self, index: int) -> str:
        return self.endpoints[index].url

    def route(self) -> int:
        """Pick the next endpoint index per the routing policy."""
        with self._lock:
            candidates = [
                (ep.in_flight / ep.weight, i)
                for i, ep in enumerate(self.endpoints)
                if ep.health is Health.HEALTHY
            ]
            if not candidates:
                raise NoHealthyEndpoint("no healthy endpoint in pool")
            best_load = min(load for load, _ in candidates)
            tied = [i for load, i in candidates if load == best_load]
            n = len(self.endpoints)
            # Round-robin: first tied index at or after the rotating cursor.
            chosen = min(tied, key=lambda i: (i - self._rr) % n)
            self._rr = (chosen + 1) % n
            return chosen

    def acquire(self, index: int) -> None:
        with self._lock:
            self.endpoints[index].in_flight += 1

    def release(self, index: int) -> None:
        with self._lock:
            ep = self.endpoints[index]
            if ep.in_flight <= 0:
                raise RuntimeError(f"unbalanced release for endpoint {index}")
            ep.in_flight -= 1

    def mark_failure(self, index: int) -> None:
        with self._lock:
            ep = self.endpoints[index]
            ep.failures += 1
            if ep.health is Health.HEALTHY:
                ep.health = Health.DEAD

    def mark_success(self, index: int) -> None:
        with self._lock:
            ep = self.endpoints[index]
            ep.failures = 0
            if ep.health is Health.DEAD:
                ep.health = Health.HEALTHY

    def drain(self, index: int) -> None:
        with self._lock:
            self.endpoints[index].health = Health.DRAINING

    def revive(self, index: int) -> None:
        with self._lock:
            self.endpoints[index].health = Health.HEALTHY

    def healthy_count(self) -> int:
        with self._lock:
            return sum(1 for ep in self.endpoints if ep.health is Health.HEALTHY)

    def dead_indices(self) -> list[int]:
        with self._lock:
            return [i for i, ep in enumerate(self.endpoints) if ep.health is Health.DEAD]

    def probe(self, index: int, transport) -> bool:
        """Health-check one endpoint; revives it on success."""
        ep = self.endpoints[index]
        with self._lock:
            ep.last_probe = time.monotonic()
        try:
            transport.health(ep.url, timeout_ms=min(self.timeout_ms, 2000))
        except Exception:
            return False
        self.mark_success(index)
        return True

    def probe_dead(self, transport) -> list[int]:
        """Probe every dead endpoint; returns the indices that revived."""
        revived = []
        for i in self.dead_indices():
            if self.probe(i, transport):
                revived.append(i)
        return revived

    def in_flight_counts(self) -> list[int]:
        with self._lock:
            return [ep.in_flight for ep in self.endpoints]


def route_request(pool: EndpointPool) -> int:
    """Deterministic endpoint selection given pool state; see EndpointPool.route."""
    return pool.route()
