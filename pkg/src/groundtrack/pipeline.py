"""Pipeline composition: the update mechanism (describe, ground, admit,
validate) and the frame-streaming loop that interleaves it with tracking.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

from .config import PipelineConfig
from .description import (
    StructuredDescription,
    build_description_prompt,
    decoupled_attribution,
    parse_structured_description,
)
from .gateway.chat import ChatRequest, ImagePart, TextPart
from .grounding import GroundingResult, ground_instances
from .images import Frame
from .trackstore import TrackRegistry
from .validation import AssignmentResult, validate_tracks

logger = logging.getLogger(__name__)

STEP_DESCRIPTION = "description"
STEP_ATTRIBUTION = "attribution"
STEP_DETECTION = "detection"
STEP_SEGMENTATION = "segmentation"
STEP_VALIDATION = "validation"
ALL_STEPS = (STEP_DESCRIPTION, STEP_ATTRIBUTION, STEP_DETECTION, STEP_SEGMENTATION, STEP_VALIDATION)


class StepTimings:
    """Per-step wall-time accumulator for the update mechanism."""

    def __init__(self):
        self.samples: dict[str, list[float]] = {step: [] for step in ALL_STEPS}

    def record(self, step: str, seconds: float) -> None:
        self.samples.setdefault(step, []).append(seconds)

    def total(self, step: str) -> float:
        return sum(self.samples.get(step, []))

    def mean(self, step: str) -> float:
        values = self.samples.get(step, [])
        return sum(values) / len(values) if values else 0.0

    def rows(self) -> list[tuple[str, int, float, float]]:
        return [
            (step, len(self.samples[step]), self.total(step), self.mean(step))
            for step in ALL_STEPS
        ]

    def to_csv(self) -> str:
        lines = ["step,samples,total_s,mean_s"]
        for step, n, total, mean in self.rows():
            lines.append(f"{step},{n},{total:.6f},{mean:.6f}")
        return "\n".join(lines) + "\n"


@dataclass
class UpdateOutcome:
    description: StructuredDescription
    grounding: GroundingResult
    admitted: list
    validation: AssignmentResult | None = None
    notes: list[str] = field(default_factory=list)


class _Timer:
    def __init__(self, timings: StepTimings | None, step: str):
        self.timings = timings
        self.step = step

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        if self.timings is not None:
            self.timings.record(self.step, time.perf_counter() - self.start)
        return False


def describe_image(
    frame: Frame,
    config: PipelineConfig,
    gateway,
    timings: StepTimings | None = None,
) -> StructuredDescription:
    """Prompt, chat, and parse; runs decoupled attribution when a task is set."""
    prompt = build_description_prompt(
        config.schema, word_cap=config.word_cap, template=config.template_text("describe")
    )
    request = ChatRequest.build(
        user_parts=[TextPart(prompt), ImagePart(frame.png_bytes())],
        model=gateway.chat_model,
    )
    with _Timer(timings, STEP_DESCRIPTION):
        response = gateway.chat(request)
        desc = parse_structured_description(
            response.text, config.schema, word_cap=config.word_cap,
            model_id=gateway.chat_model,
        )
    if config.task:
        with _Timer(timings, STEP_ATTRIBUTION):
            desc = decoupled_attribution(
                desc, config.task, "task_relevant", gateway, frame,
                template=config.template_text("attribute"),
            )
    return desc


def run_update(
    frame: Frame,
    registry: TrackRegistry,
    config: PipelineConfig,
    gateway,
    timings: StepTimings | None = None,
) -> UpdateOutcome:
    """One pass of the update mechanism against a live registry."""
    desc = describe_image(frame, config, gateway, timings=timings)
    with _Timer(timings, STEP_DETECTION):
        grounding = ground_instances(desc, frame, gateway, odf=config.odf)
    with _Timer(timings, STEP_SEGMENTATION):
        admitted = registry.admit_detections(grounding, frame, gateway)
    outcome = UpdateOutcome(description=desc, grounding=grounding, admitted=admitted)
    if config.validate:
        with _Timer(timings, STEP_VALIDATION):
            names = set(desc.names())
            in_scope = [
                t for t in registry.live_tracks()
                if t.instance is not None and t.instance.object_name in names
            ]
            if in_scope:
                outcome.validation = validate_tracks(
                    registry, desc, frame, gateway,
                    max_concurrency=config.max_concurrency,
                    crop_margin=config.crop_margin,
                    template=config.template_text("validate"),
                )
            else:
                outcome.notes.append("validation skipped: no live tracks in scope")
    return outcome


def export_detections(registry: TrackRegistry) -> list[dict]:
    """Final per-track detections (source boxes) for evaluation export."""
    out = []
    for track in registry.exportable_tracks():
        if track.instance is None or track.source_bbox is None:
            continue
        out.append(
            {
                "track_id": track.track_id,
                "object_name": track.instance.object_name,
                "description": track.instance.description,
                "bbox": track.source_bbox,
                "confidence": track.source_confidence,
            }
        )
    return sorted(out, key=lambda d: d["track_id"])
