"""Validation and error correction: crop-based re-identification proposals
collected in parallel, grouping of similar instance names, and the staged
assignment heuristic that validates, corrects, or rejects each grounding
while keeping the final instance-to-track mapping injective.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from typing import Sequence

from .description import StructuredDescription
from .errors import GatewayError, InconsistentInput
from .gateway.chat import ChatRequest, ChatResponse, ImagePart, TextPart
from .geometry import Box
from .images import Frame
from .prompts import load_template, render
from .textmatch import match_keyword

logger = logging.getLogger(__name__)

INVALID_KEYWORD = "invalid"
CROP_MARGIN = 0.10

_SUFFIX_RE = re.compile(r"_\d+$")


@dataclass
class ValidationProposal:
    track_id: int
    proposed: str | None  # matched instance name, or None for invalid
    raw_text: str
    latency_ms: float = 0.0
    note: str = ""


@dataclass
class NameGroup:
    group_id: int
    members: list[str]
    base_name: str


@dataclass
class Verdict:
    track_id: int
    kind: str  # validated | corrected | rejected
    instance: str | None
    stage: str


@dataclass
class AssignmentResult:
    verdicts: list[Verdict]
    final_mapping: dict[str, int]  # instance name -> track id
    audit: list[dict] = field(default_factory=list)

    def verdict_for(self, track_id: int) -> Verdict:
        for v in self.verdicts:
            if v.track_id == track_id:
                return v
        raise KeyError(track_id)

    def audit_jsonl(self) -> str:
        return "\n".join(json.dumps(entry) for entry in self.audit)


# --- proposal generation --------------------------------------------------------

def build_validation_prompt(
    frame: Frame,
    box: Box,
    desc: StructuredDescription,
    model: str,
    crop_margin: float = CROP_MARGIN,
    template: str | None = None,
) -> ChatRequest:
    """Two-image request: the full frame plus the padded crop at `box`.

    Raises DegenerateCrop when the box has no area left after clamping.
    """
    if not desc.instances:
        raise ValueError("description must be non-empty")
    crop = frame.crop(box, margin=crop_margin)
    text = template if template is not None else load_template("validate")
    prompt = render(
        text,
        {"description_json": desc.instances_json(), "invalid_keyword": INVALID_KEYWORD},
    )
    return ChatRequest.build(
        user_parts=[TextPart(prompt), ImagePart(frame.png_bytes()), ImagePart(crop.png_bytes())],
        model=model,
    )


def _normalize_answer(text: str) -> str:
    return text.strip().strip("`\"'.,!?:; \n\t")


def match_proposal(text: str, names: Sequence[str]) -> str | None:
    """Snap a raw validation answer onto an instance name, or None for invalid."""
    cleaned = _normalize_answer(text)
    if cleaned.lower() == INVALID_KEYWORD:
        return None
    if cleaned in names:
        return cleaned
    return match_keyword(cleaned, names)


def collect_proposals(
    track_boxes: Sequence[tuple[int, Box]],
    desc: StructuredDescription,
    frame: Frame,
    gateway,
    max_concurrency: int = 8,
    crop_margin: float = CROP_MARGIN,
    template: str | None = None,
) -> list[ValidationProposal]:
    """One crop-identification request per track, dispatched concurrently.

    Transport failures degrade to invalid proposals instead of aborting:
    validation must fail safe toward rejection.
    """
    if not track_boxes:
        raise ValueError("at least one track required")
    names = desc.names()
    requests = [
        build_validation_prompt(frame, box, desc, gateway.chat_model,
                                crop_margin=crop_margin, template=template)
        for _, box in track_boxes
    ]
    results = gateway.chat_fan_out(requests, max_concurrency=max_concurrency)
    proposals: list[ValidationProposal] = []
    for (track_id, _), result in zip(track_boxes, results):
        if isinstance(result, GatewayError):
            proposals.append(
                ValidationProposal(
                    track_id=track_id, proposed=None, raw_text="",
                    note=f"transport error: {result}",
                )
            )
            continue
        response: ChatResponse = result
        matched = match_proposal(response.text, names)
        proposals.append(
            ValidationProposal(
                track_id=track_id,
                proposed=matched,
                raw_text=response.text,
                latency_ms=response.latency_ms,
            )
        )
    return proposals


# --- grouping --------------------------------------------------------------------

def base_name(name: str) -> str:
    """Strip one uniquification suffix: "cup_2" -> "cup"."""
    return _SUFFIX_RE.sub("", name)


def group_instances(desc: StructuredDescription) -> list[NameGroup]:
    """Partition instances into groups of similar names.

    Instances sharing a base name, or whose base names are within the
    keyword-matching edit distance in either direction, join one group
    (transitive closure).
    """
    if not desc.instances:
        raise ValueError("description must be non-empty")
    names = desc.names()
    bases = [base_name(n) for n in names]
    parent = list(range(len(names)))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i: int, j: int) -> None:
        parent[find(i)] = find(j)

    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            if bases[i] == bases[j]:
                union(i, j)
            elif (
                match_keyword(bases[i], [bases[j]]) is not None
                or match_keyword(bases[j], [bases[i]]) is not None
            ):
                union(i, j)

    clusters: dict[int, list[int]] = {}
    for i in range(len(names)):
        clusters.setdefault(find(i), []).append(i)
    groups = []
    for gid, indices in enumerate(sorted(clusters.values(), key=lambda idx: idx[0])):
        groups.append(
            NameGroup(
                group_id=gid,
                members=[names[i] for i in indices],
                base_name=bases[indices[0]],
            )
        )
    return groups


# --- assignment solving ------------------------------------------------------------

def solve_assignment(
    original: dict[int, tuple[str, float]],
    proposals: Sequence[ValidationProposal],
    groups: Sequence[NameGroup],
) -> AssignmentResult:
    """Staged heuristic deciding validate/correct/reject per track.

    1. Invalid proposals reject their track.
    2. Tracks whose proposed group matches their original group keep their
       original instance; duplicate claims resolve by detector confidence
       (ties by track id), losers moving to unassigned group members.
    3. Cross-group proposals correct onto an unassigned member of the
       proposed group, the exact proposed instance first, competing by
       confidence.
    4. Corrections never displace an assignment: a full group rejects.
    """
    if {p.track_id for p in proposals} != set(original):
        raise InconsistentInput(
            f"proposals cover tracks {sorted(p.track_id for p in proposals)}, "
            f"original mapping has {sorted(original)}"
        )
    group_of: dict[str, NameGroup] = {}
    for group in groups:
        for member in group.members:
            group_of[member] = group
    for track_id, (name, _conf) in original.items():
        if name not in group_of:
            raise InconsistentInput(f"track {track_id}: original instance {name!r} not grouped")
    for p in proposals:
        if p.proposed is not None and p.proposed not in group_of:
            raise InconsistentInput(f"track {p.track_id}: proposal {p.proposed!r} not grouped")

    assigned: dict[str, int] = {}
    verdicts: dict[int, Verdict] = {}

    def take(track_id: int, candidates: list[str]) -> str | None:
        for name in candidates:
            if name not in assigned:
                assigned[name] = track_id
                return name
        return None

    invalid = [p for p in proposals if p.proposed is None]
    same_group = [
        p for p in proposals
        if p.proposed is not None
        and group_of[p.proposed] is group_of[original[p.track_id][0]]
    ]
    cross_group = [
        p for p in proposals
        if p.proposed is not None
        and group_of[p.proposed] is not group_of[original[p.track_id][0]]
    ]

    for p in invalid:
        verdicts[p.track_id] = Verdict(p.track_id, "rejected", None, stage="invalid")

    by_priority = lambda p: (-original[p.track_id][1], p.track_id)

    for p in sorted(same_group, key=by_priority):
        original_name = original[p.track_id][0]
        group = group_of[original_name]
        if original_name not in assigned:
            assigned[original_name] = p.track_id
            verdicts[p.track_id] = Verdict(p.track_id, "validated", original_name, stage="agreement")
            continue
        fallback = take(p.track_id, list(group.members))
        if fallback is not None:
            verdicts[p.track_id] = Verdict(
                p.track_id, "corrected", fallback, stage="duplicate_resolution"
            )
        else:
            verdicts[p.track_id] = Verdict(p.track_id, "rejected", None, stage="group_exhausted")

    for p in sorted(cross_group, key=by_priority):
        group = group_of[p.proposed]
        candidates = [p.proposed] + [m for m in group.members if m != p.proposed]
        chosen = take(p.track_id, candidates)
        if chosen is not None:
            verdicts[p.track_id] = Verdict(p.track_id, "corrected", chosen, stage="correction")
        else:
            verdicts[p.track_id] = Verdict(p.track_id, "rejected", None, stage="group_exhausted")

    ordered = [verdicts[p.track_id] for p in proposals]
    audit = []
    by_track = {p.track_id: p for p in proposals}
    for verdict in ordered:
        p = by_track[verdict.track_id]
        audit.append(
            {
                "track_id": verdict.track_id,
                "original": original[verdict.track_id][0],
                "proposed": p.proposed if p.proposed is not None else INVALID_KEYWORD,
                "verdict": verdict.kind,
                "stage": verdict.stage,
                "confidence": original[verdict.track_id][1],
                "final": verdict.instance,
            }
        )
        logger.debug("validation verdict: %s", audit[-1])
    final = {v.instance: v.track_id for v in ordered if v.instance is not None}
    return AssignmentResult(verdicts=ordered, final_mapping=final, audit=audit)


def validate_tracks(
    registry,
    desc: StructuredDescription,
    frame: Frame,
    gateway,
    max_concurrency: int = 8,
    crop_margin: float = CROP_MARGIN,
    template: str | None = None,
) -> AssignmentResult:
    """Full validation pass over a registry's live tracks, applying verdicts.

    Rejected tracks are marked rejected (and stop exporting); corrected tracks
    get their instance metadata swapped to the corrected one. Tracks whose
    instance name is not part of the given description (admitted by an
    earlier update under different naming) are out of scope for this pass and
    stay untouched.
    """
    names = set(desc.names())
    live = [
        t for t in registry.live_tracks()
        if t.instance is not None and t.instance.object_name in names
    ]
    if not live:
        raise ValueError("no live tracks with instances from this description")
    track_boxes = [(t.track_id, t.source_bbox or t.bbox) for t in live]
    proposals = collect_proposals(
        track_boxes, desc, frame, gateway,
        max_concurrency=max_concurrency, crop_margin=crop_margin, template=template,
    )
    original = {t.track_id: (t.instance.object_name, t.source_confidence) for t in live}
    groups = group_instances(desc)
    result = solve_assignment(original, proposals, groups)
    by_name = {inst.object_name: inst for inst in desc.instances}
    for verdict in result.verdicts:
        if verdict.kind == "rejected":
            registry.reject(verdict.track_id)
        elif verdict.kind == "corrected":
            registry.correct(verdict.track_id, by_name[verdict.instance])
    return result
