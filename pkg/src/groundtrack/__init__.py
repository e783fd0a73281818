"""groundtrack: orchestration engine for VLM-driven open-vocabulary
grounding, segmentation tracking, and benchmark evaluation.

The engine turns a single image plus an attribute schema into a structured
machine-readable description through an external vision-language model,
grounds each described instance with an open-vocabulary detector under an
over-detect budget, curates segmentation tracks by IoU gating, optionally
validates groundings with a parallel crop-voting pass, and evaluates the
whole loop on detection benchmarks via embedding-based label matching. All
model services are external; deterministic in-process mocks make the entire
loop runnable offline.
"""

__version__ = "0.1.0"

from .description import (
    AttributeSchema,
    AttributeSpec,
    ObjectInstance,
    StructuredDescription,
    build_description_prompt,
    coerce_value,
    decoupled_attribution,
    extract_json,
    parse_structured_description,
)
from .geometry import decode_rle, encode_rle, iou, mask_to_bbox
from .grounding import GroundingResult, budget, curate, ground_instances
from .trackstore import TrackRegistry
from .validation import (
    AssignmentResult,
    NameGroup,
    ValidationProposal,
    collect_proposals,
    group_instances,
    solve_assignment,
    validate_tracks,
)

__all__ = [
    "AssignmentResult",
    "AttributeSchema",
    "AttributeSpec",
    "GroundingResult",
    "NameGroup",
    "ObjectInstance",
    "StructuredDescription",
    "TrackRegistry",
    "ValidationProposal",
    "budget",
    "build_description_prompt",
    "coerce_value",
    "collect_proposals",
    "curate",
    "decode_rle",
    "decoupled_attribution",
    "encode_rle",
    "extract_json",
    "ground_instances",
    "group_instances",
    "iou",
    "mask_to_bbox",
    "parse_structured_description",
    "solve_assignment",
    "validate_tracks",
]
