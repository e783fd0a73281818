"""Grounding: turn a structured description plus detector output into a
curated instance-to-detections mapping under the over-detect budget.

Every instance first receives its single most confident detection; with an
over-detect factor above 1, the remaining candidates across all instances
are added in globally descending confidence until the budget is exhausted.
Duplicates raise recall at the cost of precision and are left for the
validation pass to disambiguate.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .description import ObjectInstance, StructuredDescription
from .gateway.services import Detection
from .images import Frame


def budget(odf: float, n: int) -> int:
    """Upper bound on propagated detections: max(n, floor(odf * n))."""
    if odf < 1.0:
        raise ValueError(f"odf must be >= 1, got {odf}")
    if n < 1:
        raise ValueError(f"instance count must be positive, got {n}")
    return max(n, math.floor(odf * n))


@dataclass(frozen=True)
class Assignment:
    instance: ObjectInstance
    prompt_index: int
    detection: Detection
    rank: int  # 1 = the primary detection for this instance


@dataclass
class GroundingResult:
    assignments: list[Assignment]
    ungrounded: list[ObjectInstance]
    odf: float
    description: StructuredDescription | None = None

    def grounded_names(self) -> list[str]:
        return [a.instance.object_name for a in self.assignments if a.rank == 1]

    def to_payload(self) -> dict:
        return {
            "odf": self.odf,
            "assignments": [
                {
                    "object_name": a.instance.object_name,
                    "prompt_index": a.prompt_index,
                    "bbox": list(a.detection.bbox),
                    "confidence": a.detection.confidence,
                    "rank": a.rank,
                }
                for a in self.assignments
            ],
            "ungrounded": [i.object_name for i in self.ungrounded],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_payload(), indent=2)


def _sort_key(det: Detection):
    # Descending confidence; ties to the lower prompt index, then the
    # lexicographically smaller box, so curation is deterministic.
    return (-det.confidence, det.prompt_index, det.bbox)


def curate(
    desc: StructuredDescription, detections: list[Detection], odf: float
) -> GroundingResult:
    """Apply the two-pass over-detect curation to raw detector output."""
    n = len(desc.instances)
    cap = budget(odf, n)

    per_prompt: dict[int, list[Detection]] = {i: [] for i in range(n)}
    for det in detections:
        per_prompt[det.prompt_index].append(det)
    for candidates in per_prompt.values():
        candidates.sort(key=_sort_key)

    assignments: list[Assignment] = []
    ungrounded: list[ObjectInstance] = []
    leftovers: list[Detection] = []
    ranks: dict[int, int] = {}

    for i, instance in enumerate(desc.instances):
        candidates = per_prompt[i]
        if not candidates:
            ungrounded.append(instance)
            continue
        assignments.append(Assignment(instance, i, candidates[0], rank=1))
        ranks[i] = 1
        leftovers.extend(candidates[1:])

    # Second pass exists only above odf 1.0; at exactly 1.0 the result stays
    # a partial injection even when some instances went ungrounded.
    if odf > 1.0 and cap > len(assignments):
        leftovers.sort(key=_sort_key)
        for det in leftovers:
            if len(assignments) >= cap:
                break
            i = det.prompt_index
            ranks[i] += 1
            assignments.append(Assignment(desc.instances[i], i, det, rank=ranks[i]))

    return GroundingResult(
        assignments=assignments, ungrounded=ungrounded, odf=odf, description=desc
    )


def ground_instances(
    desc: StructuredDescription, frame: Frame, gateway, odf: float = 1.0
) -> GroundingResult:
    """Detect with one prompt per instance description, then curate."""
    if not desc.instances:
        raise ValueError("description must be non-empty")
    prompts = [inst.description for inst in desc.instances]
    detections = gateway.detect(frame, prompts)
    return curate(desc, detections, odf)
