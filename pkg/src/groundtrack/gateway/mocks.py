"""Deterministic in-process mock backends for all four model services.

Mocks answer from a "world" fixture: a set of images (identified by pixel
hash) with annotated objects. Every response is a pure function of request
content plus fixture state, so concurrent callers always see the same bytes.
The same backends serve unit tests in-process and the HTTP mock server.

World fixture layout (world.json next to its image files):

    {
      "images": [
        {"file": "img_000.png", "width": 320, "height": 240,
         "objects": [
            {"uid": "obj0", "object_name": "red mug",
             "description": "small red ceramic mug", "bbox": [40, 60, 120, 140],
             "color": [200, 30, 40], "confidence": 0.9,
             "attributes": {}, "task_relevant": false}
         ]}
      ],
      "chat": {"rules": [{"contains": "...", "response": "..."}]},
      "definitions": {"red mug": "..."}
    }

Per-object scripting hooks: detector_bbox (report a wrong box),
extra_detections (ODF fodder), detectable (false hides it from the
detector), validator_response (override the crop answer).
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import ServiceUnavailable, TransportTimeout
from ..geometry import Box, encode_rle
from .transport import FaultScript, MockTransport

BACKGROUND_COLOR = (230, 230, 230)

# Stable phrases the shipped prompt templates contain; the chat mock keys its
# behavior on them. Overriding templates means re-scripting the mock rules.
DESCRIBE_MARKER = "single JSON list"
ATTRIBUTION_MARKER = "task-relevant object instances"
DEFINE_MARKER = "five-sentence definition"
INVALID_KEYWORD = "invalid"

_DEFINE_NAME_RE = re.compile(r'category referred to by "([^"]+)"')


def pixel_hash(img: Image.Image) -> str:
    rgb = img.convert("RGB")
    digest = hashlib.sha256()
    digest.update(f"{rgb.width}x{rgb.height}:".encode())
    digest.update(rgb.tobytes())
    return digest.hexdigest()


def definition_text(name: str) -> str:
    """Deterministic five-sentence category definition used by the chat mock."""
    return (
        f"A {name} is a distinct category of physical object. "
        f"It has a characteristic shape and construction. "
        f"A {name} serves a typical purpose in everyday settings. "
        f"It can be recognized by its visual appearance. "
        f"Instances of {name} vary in size and material."
    )


@dataclass
class WorldObject:
    uid: str
    object_name: str
    description: str
    bbox: Box
    color: tuple[int, int, int]
    confidence: float = 0.9
    attributes: dict = field(default_factory=dict)
    task_relevant: bool = False
    detector_bbox: Box | None = None
    extra_detections: list[dict] = field(default_factory=list)
    detectable: bool = True
    validator_response: str | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "WorldObject":
        return cls(
            uid=data["uid"],
            object_name=data["object_name"],
            description=data["description"],
            bbox=tuple(data["bbox"]),
            color=tuple(data["color"]),
            confidence=data.get("confidence", 0.9),
            attributes=dict(data.get("attributes", {})),
            task_relevant=bool(data.get("task_relevant", False)),
            detector_bbox=tuple(data["detector_bbox"]) if data.get("detector_bbox") else None,
            extra_detections=list(data.get("extra_detections", [])),
            detectable=bool(data.get("detectable", True)),
            validator_response=data.get("validator_response"),
        )

    def to_dict(self) -> dict:
        out = {
            "uid": self.uid,
            "object_name": self.object_name,
            "description": self.description,
            "bbox": list(self.bbox),
            "color": list(self.color),
            "confidence": self.confidence,
            "attributes": self.attributes,
            "task_relevant": self.task_relevant,
            "detectable": self.detectable,
        }
        if self.detector_bbox:
            out["detector_bbox"] = list(self.detector_bbox)
        if self.extra_detections:
            out["extra_detections"] = self.extra_detections
        if self.validator_response is not None:
            out["validator_response"] = self.validator_response
        return out


@dataclass
class WorldImage:
    file: str
    width: int
    height: int
    objects: list[WorldObject]
    describe_wrap: str | None = None
    pixel_hash: str = ""

    def find_by_color(self, color: tuple[int, int, int]) -> WorldObject | None:
        for obj in self.objects:
            if obj.color == color:
                return obj
        return None


class MockWorld:
    def __init__(self, images: list[WorldImage], chat_rules: list[dict] | None = None,
                 definitions: dict[str, str] | None = None):
        self.images = images
        self.chat_rules = chat_rules or []
        self.definitions = definitions or {}
        self.by_hash = {img.pixel_hash: img for img in images}
        self.by_file = {img.file: img for img in images}

    @classmethod
    def load(cls, fixture_dir: str | Path) -> "MockWorld":
        fixture_dir = Path(fixture_dir)
        data = json.loads((fixture_dir / "world.json").read_text())
        images = []
        for entry in data["images"]:
            img = Image.open(fixture_dir / entry["file"])
            img.load()
            world_img = WorldImage(
                file=entry["file"],
                width=entry["width"],
                height=entry["height"],
                objects=[WorldObject.from_dict(o) for o in entry.get("objects", [])],
                describe_wrap=entry.get("describe_wrap"),
                pixel_hash=pixel_hash(img),
            )
            images.append(world_img)
        chat = data.get("chat", {})
        return cls(images, chat.get("rules"), data.get("definitions"))

    def scene_for_payload(self, payload_b64: str) -> WorldImage | None:
        img = Image.open(io.BytesIO(base64.b64decode(payload_b64)))
        return self.by_hash.get(pixel_hash(img))

    def all_texts(self) -> list[str]:
        """Every text the closed loop can ask the embedder for."""
        texts: set[str] = set()
        for img in self.images:
            for obj in img.objects:
                texts.add(obj.object_name)
                texts.add(obj.description)
                texts.add(self.definitions.get(obj.object_name, definition_text(obj.object_name)))
        return sorted(texts)


def _usage(prompt_text: str, completion: str) -> dict:
    return {
        "prompt_tokens": len(prompt_text.split()),
        "completion_tokens": max(1, len(completion.split())),
    }


def _chat_body(prompt_text: str, completion: str) -> dict:
    return {
        "choices": [{"message": {"content": completion}}],
        "usage": _usage(prompt_text, completion),
    }


class MockChatBackend:
    """Scripted VLM. World mode answers describe/attribution/validation/
    definition prompts from scene annotations; rule mode matches substrings.
    """

    def __init__(self, world: MockWorld | None = None, rules: list[dict] | None = None,
                 default_response: str = "[]"):
        self.world = world
        self.rules = list(rules or [])
        if world is not None:
            self.rules.extend(world.chat_rules)
        self.default_response = default_response

    def __call__(self, path: str, payload: dict) -> dict:
        texts: list[str] = []
        images_b64: list[str] = []
        for message in payload.get("messages", []):
            for part in message.get("content", []):
                if part.get("type") == "text":
                    texts.append(part.get("text", ""))
                elif part.get("type") == "image_url":
                    url = part.get("image_url", {}).get("url", "")
                    images_b64.append(url.split("base64,", 1)[-1])
        prompt_text = "\n".join(texts)

        for rule in self.rules:
            if rule.get("contains", "") in prompt_text:
                if rule.get("fail") == "timeout":
                    raise TransportTimeout("scripted rule timeout")
                if rule.get("fail"):
                    raise ServiceUnavailable("scripted rule failure")
                return _chat_body(prompt_text, rule["response"])

        completion = self._answer(prompt_text, images_b64)
        return _chat_body(prompt_text, completion)

    def _answer(self, prompt_text: str, images_b64: list[str]) -> str:
        if DEFINE_MARKER in prompt_text:
            match = _DEFINE_NAME_RE.search(prompt_text)
            name = match.group(1) if match else "object"
            if self.world and name in self.world.definitions:
                return self.world.definitions[name]
            return definition_text(name)
        if self.world is None:
            return self.default_response
        if len(images_b64) >= 2:
            return self._validate(images_b64[0], images_b64[1])
        if ATTRIBUTION_MARKER in prompt_text and images_b64:
            return self._attribute(images_b64[0])
        if DESCRIBE_MARKER in prompt_text and images_b64:
            return self._describe(images_b64[0])
        return self.default_response

    def _describe(self, image_b64: str) -> str:
        scene = self.world.scene_for_payload(image_b64)
        if scene is None:
            return self.default_response
        entries = []
        for obj in scene.objects:
            entry = {"object_name": obj.object_name, "description": obj.description}
            entry.update(obj.attributes)
            entries.append(entry)
        body = json.dumps(entries)
        if scene.describe_wrap:
            return scene.describe_wrap.replace("{json}", body)
        return body

    def _attribute(self, image_b64: str) -> str:
        scene = self.world.scene_for_payload(image_b64)
        if scene is None:
            return "[]"
        names = [o.object_name for o in scene.objects if o.task_relevant]
        return json.dumps(names)

    def _validate(self, full_b64: str, crop_b64: str) -> str:
        scene = self.world.scene_for_payload(full_b64)
        if scene is None:
            return INVALID_KEYWORD
        crop = Image.open(io.BytesIO(base64.b64decode(crop_b64))).convert("RGB")
        center = crop.getpixel((crop.width // 2, crop.height // 2))
        obj = scene.find_by_color(tuple(center))
        if obj is None:
            return INVALID_KEYWORD
        if obj.validator_response is not None:
            return obj.validator_response
        return obj.object_name


class MockDetectorBackend:
    """Detector answering from scene annotations or a direct prompt script."""

    def __init__(self, world: MockWorld | None = None,
                 by_prompt: dict[str, list[dict]] | None = None):
        self.world = world
        self.by_prompt = by_prompt or {}

    def __call__(self, path: str, payload: dict) -> dict:
        prompts = payload.get("prompts", [])
        detections: list[dict] = []
        scene = self.world.scene_for_payload(payload.get("image", "")) if self.world else None
        for i, prompt in enumerate(prompts):
            if prompt in self.by_prompt:
                for det in self.by_prompt[prompt]:
                    detections.append(
                        {"prompt_index": i, "bbox": list(det["bbox"]), "score": det["score"]}
                    )
                continue
            if scene is None:
                continue
            for obj in scene.objects:
                if obj.description != prompt or not obj.detectable:
                    continue
                bbox = obj.detector_bbox or obj.bbox
                detections.append(
                    {"prompt_index": i, "bbox": list(bbox), "score": obj.confidence}
                )
                for extra in obj.extra_detections:
                    detections.append(
                        {"prompt_index": i, "bbox": list(extra["bbox"]), "score": extra["score"]}
                    )
        return {"detections": detections}


def fill_rectangle_mask(width: int, height: int, box: Box) -> np.ndarray:
    """Inclusive rectangle fill: box (10,10,20,20) covers an 11x11 cell grid."""
    mask = np.zeros((height, width), dtype=bool)
    x0 = max(0, int(box[0]))
    y0 = max(0, int(box[1]))
    x1 = min(width - 1, int(box[2]))
    y1 = min(height - 1, int(box[3]))
    if x1 >= x0 and y1 >= y0:
        mask[y0 : y1 + 1, x0 : x1 + 1] = True
    return mask


class MockTrackerBackend:
    """Rectangle-mask tracker.

    Each added box becomes a track. When a world is attached, the box is bound
    to the scene object whose annotated box contains its center; on later
    steps the track's mask follows that object's box in the current scene, and
    goes empty while the object is absent. Unbound tracks keep a static mask.
    """

    def __init__(self, world: MockWorld | None = None,
                 empty_after_steps: dict[int, int] | None = None):
        self.world = world
        self.empty_after_steps = empty_after_steps or {}
        self._states: dict[str, dict] = {}
        self._lock = threading.Lock()
        self._counter = 0

    def _bind(self, scene: WorldImage | None, box: Box) -> str | None:
        if scene is None:
            return None
        cx = (box[0] + box[2]) / 2.0
        cy = (box[1] + box[3]) / 2.0
        for obj in scene.objects:
            x0, y0, x1, y1 = obj.bbox
            if x0 <= cx < x1 and y0 <= cy < y1:
                return obj.uid
        return None

    def _current_box(self, scene: WorldImage | None, track: dict) -> Box | None:
        if track["uid"] is not None and scene is not None:
            for obj in scene.objects:
                if obj.uid == track["uid"]:
                    return tuple(obj.bbox)
            return None  # object absent from this scene
        return tuple(track["box"])

    def _snapshot(self, state: dict, scene: WorldImage | None, width: int, height: int) -> list[dict]:
        tracks = []
        for track in state["tracks"]:
            box = self._current_box(scene, track)
            limit = self.empty_after_steps.get(track["id"])
            if limit is not None and state["steps"] > limit:
                box = None
            if box is None:
                mask = np.zeros((height, width), dtype=bool)
            else:
                mask = fill_rectangle_mask(width, height, box)
            tracks.append({"id": track["id"], "mask_rle": encode_rle(mask)})
        return tracks

    def __call__(self, path: str, payload: dict) -> dict:
        img = Image.open(io.BytesIO(base64.b64decode(payload["image"])))
        width, height = img.width, img.height
        scene = self.world.by_hash.get(pixel_hash(img)) if self.world else None

        with self._lock:
            if path.endswith("/init"):
                self._counter += 1
                state_id = f"state-{self._counter}"
                state = {"tracks": [], "next_id": 0, "steps": 0}
                self._states[state_id] = state
                boxes = payload.get("boxes", [])
            else:
                state_id = payload.get("state_id", "")
                state = self._states.get(state_id)
                if state is None:
                    return {"error": {"code": "stale_handle", "message": f"unknown state {state_id!r}"}}
                state["steps"] += 1
                boxes = payload.get("add_boxes", [])
            for box in boxes:
                box = tuple(box)
                state["tracks"].append(
                    {"id": state["next_id"], "uid": self._bind(scene, box), "box": box}
                )
                state["next_id"] += 1
            tracks = self._snapshot(state, scene, width, height)
        return {"state_id": state_id, "tracks": tracks}


class MockEmbedderBackend:
    """One-hot embedder: codebook texts get dedicated dimensions (pairwise
    orthogonal), unknown texts hash into a fallback range.
    """

    FALLBACK_SPAN = 4096  # hash range for texts outside the codebook

    def __init__(self, codebook: dict[str, int] | None = None, dim: int | None = None,
                 world: MockWorld | None = None):
        if codebook is None and world is not None:
            codebook = {text: i for i, text in enumerate(world.all_texts())}
        self.codebook = codebook or {}
        base = len(self.codebook)
        self.dim = dim if dim is not None else base + self.FALLBACK_SPAN
        if self.dim <= base:
            raise ValueError("dim must exceed codebook size")

    def _index(self, text: str) -> int:
        if text in self.codebook:
            return self.codebook[text]
        span = self.dim - len(self.codebook)
        digest = hashlib.sha256(text.encode("utf-8")).digest()
        return len(self.codebook) + int.from_bytes(digest[:8], "big") % span

    def __call__(self, path: str, payload: dict) -> dict:
        vectors = []
        for text in payload.get("texts", []):
            vec = [0.0] * self.dim
            vec[self._index(text)] = 1.0
            vectors.append(vec)
        return {"vectors": vectors}


@dataclass
class MockServices:
    chat: MockChatBackend
    detector: MockDetectorBackend
    tracker: MockTrackerBackend
    embedder: MockEmbedderBackend

    CHAT_URL = "mock://chat"
    DETECTOR_URL = "mock://detector"
    TRACKER_URL = "mock://tracker"
    EMBEDDER_URL = "mock://embedder"

    @classmethod
    def for_world(cls, world: MockWorld) -> "MockServices":
        return cls(
            chat=MockChatBackend(world=world),
            detector=MockDetectorBackend(world=world),
            tracker=MockTrackerBackend(world=world),
            embedder=MockEmbedderBackend(world=world),
        )

    def install(self, transport: MockTransport,
                faults: dict[str, FaultScript] | None = None) -> MockTransport:
        faults = faults or {}
        transport.register(self.CHAT_URL, self.chat, faults.get("chat"))
        transport.register(self.DETECTOR_URL, self.detector, faults.get("detector"))
        transport.register(self.TRACKER_URL, self.tracker, faults.get("tracker"))
        transport.register(self.EMBEDDER_URL, self.embedder, faults.get("embedder"))
        return transport
