"""Clients for the detector, segmenter/tracker, and text-embedder services,
plus the ModelGateway facade bundling all four service roles.
"""

from __future__ import annotations

import base64
import math
import threading
import time
from dataclasses import dataclass, field
from typing import Sequence

from ..errors import (
    AllEndpointsFailed,
    DimensionMismatch,
    NoHealthyEndpoint,
    ProtocolViolation,
    ServiceUnavailable,
    StaleHandle,
    TransportTimeout,
)
from ..geometry import Box, clamp_box, is_valid_box
from ..images import Frame
from .chat import ChatRequest, ChatResponse, FanOutResult, chat_complete, fan_out
from .pool import EndpointPool
from .transport import Transport

DETECT_PATH = "/detect"
TRACK_INIT_PATH = "/track/init"
TRACK_STEP_PATH = "/track/step"
EMBED_PATH = "/embed"


@dataclass(frozen=True)
class Detection:
    prompt_index: int
    bbox: Box
    confidence: float


@dataclass(frozen=True)
class TrackerSnapshot:
    frame_index: int
    entries: tuple[tuple[int, dict], ...]  # (track_id, mask_rle)

    def track_ids(self) -> list[int]:
        return [tid for tid, _ in self.entries]


def _failover_post(pool: EndpointPool, transport: Transport, path: str, payload: dict) -> dict:
    """Shared retry loop: same endpoint selection and budget as chat_complete."""
    attempts: list[dict] = []
    budget = 1 + pool.max_retries
    for attempt in range(budget):
        try:
            index = pool.route()
        except NoHealthyEndpoint:
            if not pool.probe_dead(transport):
                attempts.append({"attempt": attempt + 1, "endpoint": None, "error": "no healthy endpoint"})
                continue
            index = pool.route()
        url = pool.url_of(index)
        pool.acquire(index)
        try:
            body = transport.post(url, path, payload, pool.timeout_ms)
        except (TransportTimeout, ServiceUnavailable) as exc:
            pool.mark_failure(index)
            attempts.append({"attempt": attempt + 1, "endpoint": url, "error": str(exc)})
            continue
        finally:
            pool.release(index)
        pool.mark_success(index)
        if isinstance(body, dict) and isinstance(body.get("error"), dict):
            code = body["error"].get("code", "")
            message = body["error"].get("message", "")
            if code == "stale_handle":
                raise StaleHandle(message or "tracker state handle unknown")
            raise ServiceUnavailable(f"{url}{path}: service error {code}: {message}")
        return body
    raise AllEndpointsFailed(f"all {budget} attempts to {path} failed", attempts=attempts)


def _b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def detect(
    pool: EndpointPool, transport: Transport, frame: Frame, prompts: Sequence[str]
) -> list[Detection]:
    """Query the open-vocabulary detector with one prompt per instance.

    Boxes come back clamped to image bounds; no confidence filtering happens
    here — curation is the grounding module's job.
    """
    if not prompts or any(not p for p in prompts):
        raise ValueError("prompts must be non-empty")
    payload = {"image": _b64(frame.png_bytes()), "prompts": list(prompts)}
    try:
        body = _failover_post(pool, transport, DETECT_PATH, payload)
    except AllEndpointsFailed as exc:
        raise ServiceUnavailable(f"detector unavailable: {exc.attempts}") from exc
    raw = body.get("detections")
    if raw is None:
        raise ProtocolViolation("detector response missing 'detections'")
    out: list[Detection] = []
    for i, det in enumerate(raw):
        try:
            prompt_index = int(det["prompt_index"])
            bbox = tuple(float(v) for v in det["bbox"])
            score = float(det["score"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolViolation(f"detection {i} malformed: {exc}") from None
        if not 0 <= prompt_index < len(prompts):
            raise ProtocolViolation(f"detection {i}: prompt_index {prompt_index} out of range")
        if len(bbox) != 4:
            raise ProtocolViolation(f"detection {i}: bbox must have 4 values")
        if not 0.0 <= score <= 1.0:
            raise ProtocolViolation(f"detection {i}: score {score} outside [0, 1]")
        clamped = clamp_box(bbox, frame.width, frame.height)
        if not is_valid_box(clamped):
            # Box fell entirely outside the image; service junk, skip it.
            continue
        out.append(Detection(prompt_index=prompt_index, bbox=clamped, confidence=score))
    return out


def _parse_tracks(body: dict, frame: Frame, frame_index: int) -> tuple[str, TrackerSnapshot]:
    state_id = body.get("state_id")
    tracks = body.get("tracks")
    if state_id is None or tracks is None:
        raise ProtocolViolation("tracker response missing state_id/tracks")
    entries = []
    seen: set[int] = set()
    expected = frame.width * frame.height
    for t in tracks:
        try:
            tid = int(t["id"])
            rle = t["mask_rle"]
            counts_total = sum(rle["counts"])
        except (KeyError, TypeError) as exc:
            raise ProtocolViolation(f"track entry malformed: {exc}") from None
        if tid in seen:
            raise ProtocolViolation(f"duplicate track id {tid} in snapshot")
        if counts_total != expected:
            raise ProtocolViolation(
                f"track {tid}: mask decodes to {counts_total} cells, expected {expected}"
            )
        seen.add(tid)
        entries.append((tid, rle))
    return str(state_id), TrackerSnapshot(frame_index=frame_index, entries=tuple(entries))


def tracker_update(
    pool: EndpointPool,
    transport: Transport,
    frame: Frame,
    boxes: Sequence[Box],
    state_handle: str | None = None,
    frame_index: int = 0,
) -> tuple[str, TrackerSnapshot]:
    """Initialize the tracker (fresh handle) or extend it with new boxes.

    Suppression of redundant boxes is the caller's job; every box passed here
    becomes a new track. Returns the (possibly new) state handle plus the
    snapshot of all live tracks for this frame.
    """
    for box in boxes:
        if not is_valid_box(box):
            raise ValueError(f"invalid box {box}")
    if state_handle is None:
        payload = {
            "image": _b64(frame.png_bytes()),
            "boxes": [list(b) for b in boxes],
        }
        path = TRACK_INIT_PATH
    else:
        payload = {
            "state_id": state_handle,
            "image": _b64(frame.png_bytes()),
            "add_boxes": [list(b) for b in boxes],
        }
        path = TRACK_STEP_PATH
    try:
        body = _failover_post(pool, transport, path, payload)
    except AllEndpointsFailed as exc:
        raise ServiceUnavailable(f"tracker unavailable: {exc.attempts}") from exc
    return _parse_tracks(body, frame, frame_index)


def _normalize(vec: list[float]) -> list[float]:
    norm = math.sqrt(sum(v * v for v in vec))
    if norm == 0:
        raise ProtocolViolation("embedder returned a zero vector")
    return [v / norm for v in vec]


class EmbeddingClient:
    """Embedder client with an exact-text cache (unbounded within a run)."""

    def __init__(self, pool: EndpointPool, transport: Transport):
        self.pool = pool
        self.transport = transport
        self._cache: dict[str, list[float]] = {}
        self._lock = threading.Lock()

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        if any(not t for t in texts):
            raise ValueError("texts must be non-empty")
        with self._lock:
            missing = [t for t in dict.fromkeys(texts) if t not in self._cache]
        if missing:
            payload = {"texts": missing}
            try:
                body = _failover_post(self.pool, self.transport, EMBED_PATH, payload)
            except AllEndpointsFailed as exc:
                raise ServiceUnavailable(f"embedder unavailable: {exc.attempts}") from exc
            vectors = body.get("vectors")
            if vectors is None or len(vectors) != len(missing):
                raise ProtocolViolation(
                    f"embedder returned {None if vectors is None else len(vectors)} vectors "
                    f"for {len(missing)} texts"
                )
            dims = {len(v) for v in vectors}
            if len(dims) > 1:
                raise DimensionMismatch(f"vector lengths differ within batch: {sorted(dims)}")
            normalized = [_normalize([float(x) for x in v]) for v in vectors]
            with self._lock:
                for text, vec in zip(missing, normalized):
                    self._cache[text] = vec
        with self._lock:
            return [list(self._cache[t]) for t in texts]

    def cache_size(self) -> int:
        with self._lock:
            return len(self._cache)


@dataclass
class ModelGateway:
    """All four service roles behind one handle.

    Pipeline code depends only on this facade, so swapping real endpoints for
    in-process mocks is a configuration change.
    """

    chat_pool: EndpointPool
    detector_pool: EndpointPool
    tracker_pool: EndpointPool
    embedder_pool: EndpointPool
    transport: Transport
    chat_model: str = "default-vlm"
    _embedder: EmbeddingClient | None = field(default=None, repr=False)

    def __post_init__(self):
        if self._embedder is None:
            self._embedder = EmbeddingClient(self.embedder_pool, self.transport)

    def chat(self, request: ChatRequest) -> ChatResponse:
        return chat_complete(self.chat_pool, self.transport, request)

    def chat_fan_out(
        self, requests: Sequence[ChatRequest], max_concurrency: int
    ) -> list[FanOutResult]:
        return fan_out(self.chat_pool, self.transport, requests, max_concurrency)

    def detect(self, frame: Frame, prompts: Sequence[str]) -> list[Detection]:
        return detect(self.detector_pool, self.transport, frame, prompts)

    def tracker_update(
        self,
        frame: Frame,
        boxes: Sequence[Box],
        state_handle: str | None = None,
        frame_index: int = 0,
    ) -> tuple[str, TrackerSnapshot]:
        return tracker_update(
            self.tracker_pool, self.transport, frame, boxes, state_handle, frame_index
        )

    def embed_texts(self, texts: Sequence[str]) -> list[list[float]]:
        return self._embedder.embed(texts)

    @property
    def embedding_cache_size(self) -> int:
        return self._embedder.cache_size()


def timed(fn, *args, **kwargs):
    """Run fn and return (result, elapsed_seconds)."""
    start = time.perf_counter()
    result = fn(*args, **kwargs)
    return result, time.perf_counter() - start
