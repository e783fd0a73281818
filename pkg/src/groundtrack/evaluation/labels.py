"""Embedding-based label matching: LLM-generated category definitions,
augmented classes, mapping rules, and the similarity protocol assigning each
detection to its most similar class.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from ..errors import EmbeddingFailure, GatewayError, SchemaViolation
from ..gateway.chat import ChatRequest, TextPart
from ..prompts import load_template, render
from .cache import DiskCache

logger = logging.getLogger(__name__)

DISCARDED = "discarded"


@dataclass(frozen=True)
class ClassEntry:
    name: str
    definition: str = ""
    origin: str = "native"  # native | augmented
    rule_target: str | None = None

    def __post_init__(self):
        if self.origin not in ("native", "augmented"):
            raise ValueError(f"unknown origin {self.origin!r}")
        if self.origin == "native" and self.rule_target is not None:
            raise ValueError(f"native class {self.name!r} must not carry a mapping rule")


@dataclass(frozen=True)
class DetectionLabel:
    name: str
    description: str
    definition: str | None = None  # None falls back to name/description only


@dataclass
class MatchRecord:
    detection_index: int
    matched_class: str
    score: float
    outcome: str  # evaluated_as:<native class> | discarded
    evaluated_as: str | None

    def to_dict(self) -> dict:
        return {
            "detection_index": self.detection_index,
            "matched_class": self.matched_class,
            "score": self.score,
            "outcome": self.outcome,
            "evaluated_as": self.evaluated_as,
        }


@dataclass
class MatchReport:
    records: list[MatchRecord] = field(default_factory=list)

    def evaluated(self) -> list[MatchRecord]:
        return [r for r in self.records if r.evaluated_as is not None]


def load_augmented_classes(path: str | Path) -> list[ClassEntry]:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"invalid JSON: {exc}", path=str(path)) from None
    entries = []
    for i, item in enumerate(data):
        if "name" not in item:
            raise SchemaViolation("augmented class missing 'name'", path=str(path), context=f"entry {i}")
        entries.append(
            ClassEntry(
                name=item["name"],
                definition=item.get("definition", ""),
                origin="augmented",
                rule_target=item.get("rule_target"),
            )
        )
    return entries


def definition_prompt(name: str, description: str | None = None,
                      template: str | None = None) -> str:
    text = template if template is not None else load_template("define")
    context = f' The category was observed as: "{description}".' if description else ""
    return render(text, {"name": name, "context": context})


def generate_definitions(
    items: Sequence[tuple[str, str | None]],
    gateway,
    cache: DiskCache | None = None,
    max_concurrency: int = 8,
    template: str | None = None,
) -> list[str | None]:
    """Five-sentence definitions, one LLM call per distinct item.

    Failed items come back as None so the caller can fall back to name-only
    embedding rather than abort.
    """
    if not items:
        return []
    if cache is None:
        cache = DiskCache()
    model = gateway.chat_model
    results: dict[tuple[str, str | None], str | None] = {}
    unique = list(dict.fromkeys(items))
    missing: list[tuple[str, str | None]] = []
    for item in unique:
        cached = cache.get(model, json.dumps(list(item)))
        if cached is not None:
            results[item] = cached
        else:
            missing.append(item)
    if missing:
        requests = [
            ChatRequest.build(
                user_parts=[TextPart(definition_prompt(name, desc, template=template))],
                model=model,
            )
            for name, desc in missing
        ]
        responses = gateway.chat_fan_out(requests, max_concurrency=max_concurrency)
        for item, response in zip(missing, responses):
            if isinstance(response, GatewayError):
                logger.warning("definition for %r failed: %s", item[0], response)
                results[item] = None
                continue
            results[item] = response.text
            cache.put(model, json.dumps(list(item)), response.text)
    return [results[item] for item in items]


class TextEmbedder:
    """Embeds texts through the gateway with an optional disk cache layer."""

    def __init__(self, gateway, model_id: str = "", cache: DiskCache | None = None):
        self.gateway = gateway
        self.model_id = model_id
        self.cache = cache if cache is not None else DiskCache()

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        missing = [t for t in dict.fromkeys(texts) if self.cache.get(self.model_id, t) is None]
        if missing:
            try:
                vectors = self.gateway.embed_texts(missing)
            except GatewayError as exc:
                raise EmbeddingFailure(f"embedding failed: {exc}") from exc
            for text, vec in zip(missing, vectors):
                self.cache.put(self.model_id, text, vec)
        return [self.cache.get(self.model_id, t) for t in texts]


def match_labels(
    detections: Sequence[DetectionLabel],
    classes: Sequence[ClassEntry],
    embedder: TextEmbedder,
) -> MatchReport:
    """Assign each detection to its most similar class.

    The score for a (detection, class) pair is the mean of the pairwise
    cosine similarities over all available texts: detection name, description,
    and definition against class name and definition — six pairs when both
    definitions exist. The argmax class decides the outcome: native classes
    evaluate directly, augmented ones with a mapping rule redirect to their
    native target, augmented ones without a rule discard the detection. Ties
    break toward the earlier class in declaration order.
    """
    import numpy as np

    if not classes:
        raise ValueError("at least one class required")
    if not any(c.origin == "native" or c.rule_target for c in classes):
        raise ValueError("class list needs at least one native or redirecting entry")

    det_texts = [
        [d.name, d.description] + ([d.definition] if d.definition else [])
        for d in detections
    ]
    class_texts = [
        [c.name] + ([c.definition] if c.definition else [])
        for c in classes
    ]
    all_texts = sorted({t for group in det_texts + class_texts for t in group})
    vectors = dict(zip(all_texts, embedder.embed(all_texts)))

    # The mean of all pairwise dot products factorizes into the dot product
    # of the two text-set centroids, so scoring is one matrix multiply.
    def centroid(texts: list[str]) -> "np.ndarray":
        return np.mean([vectors[t] for t in texts], axis=0)

    report = MatchReport()
    if detections:
        det_matrix = np.stack([centroid(texts) for texts in det_texts])
        class_matrix = np.stack([centroid(texts) for texts in class_texts])
        score_matrix = det_matrix @ class_matrix.T
    for index in range(len(detections)):
        scores = score_matrix[index]
        best_index = int(np.argmax(scores))  # argmax keeps the earliest tie
        best_class = classes[best_index]
        best_score = float(scores[best_index])
        if best_class.origin == "native":
            evaluated: str | None = best_class.name
            outcome = f"evaluated_as:{evaluated}"
        elif best_class.rule_target is not None:
            evaluated = best_class.rule_target
            outcome = f"evaluated_as:{evaluated}"
        else:
            evaluated = None
            outcome = DISCARDED
        report.records.append(
            MatchRecord(
                detection_index=index,
                matched_class=best_class.name,
                score=best_score,
                outcome=outcome,
                evaluated_as=evaluated,
            )
        )
    return report
