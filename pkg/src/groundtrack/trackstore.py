"""Live track registry: admit grounded detections under the IoU gate, step
the external tracker across frames, and keep instance metadata attached to
masks.

The registry is single-writer: admissions and frame steps are serialized
against each other (slow update path and fast streaming path interleave at
operation granularity), while snapshots can be exported concurrently.
"""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass

from .description import ObjectInstance
from .errors import EmptyMask, ProtocolViolation
from .geometry import Box, decode_rle, iou, mask_to_bbox
from .grounding import Assignment, GroundingResult
from .images import Frame

logger = logging.getLogger(__name__)

IOU_GATE = 0.6
LOST_PATIENCE = 5

LIVE = "live"
LOST = "lost"
REJECTED = "rejected"


@dataclass
class Track:
    track_id: int
    instance: ObjectInstance | None
    mask_rle: dict
    bbox: Box | None
    birth_frame: int
    status: str = LIVE
    source_bbox: Box | None = None  # detector box the track was created from
    source_confidence: float = 0.0
    miss_count: int = 0

    def to_dict(self) -> dict:
        return {
            "id": self.track_id,
            "object_name": self.instance.object_name if self.instance else None,
            "bbox": list(self.bbox) if self.bbox else None,
            "mask_rle": self.mask_rle,
            "status": self.status,
            "attributes": self.instance.attributes if self.instance else {},
        }


class TrackRegistry:
    def __init__(self, iou_gate: float = IOU_GATE, patience: int = LOST_PATIENCE):
        if not 0.0 < iou_gate < 1.0:
            raise ValueError(f"iou gate must be in (0, 1), got {iou_gate}")
        self.tracks: dict[int, Track] = {}
        self.frame_index = 0
        self.state_handle: str | None = None
        self.iou_gate = iou_gate
        self.patience = patience
        self._lock = threading.RLock()
        self.suppression_log: list[dict] = []

    def live_tracks(self) -> list[Track]:
        with self._lock:
            return [t for t in self.tracks.values() if t.status == LIVE]

    def exportable_tracks(self) -> list[Track]:
        """Everything but rejected tracks, which stop being exported."""
        with self._lock:
            return [t for t in self.tracks.values() if t.status != REJECTED]

    def _apply_snapshot_entry(self, track: Track, rle: dict) -> None:
        track.mask_rle = rle
        try:
            track.bbox = mask_to_bbox(decode_rle(rle))
        except EmptyMask:
            track.bbox = None

    def admit_detections(
        self, grounding: GroundingResult, frame: Frame, gateway
    ) -> list[tuple[Track, ObjectInstance]]:
        """Create tracks for grounded detections that survive the IoU gate.

        A detection overlapping a live track above the gate is suppressed: its
        metadata fills the track's empty instance slot if there is one,
        otherwise the suppression is only logged. Surviving boxes are appended
        to the tracker state in one call; the registry is untouched when that
        call fails.
        """
        with self._lock:
            live = self.live_tracks()
            survivors: list[Assignment] = []
            for assignment in grounding.assignments:
                best_iou = 0.0
                best_track: Track | None = None
                for track in live:
                    if track.bbox is None:
                        continue
                    overlap = iou(assignment.detection.bbox, track.bbox)
                    if overlap > best_iou:
                        best_iou = overlap
                        best_track = track
                if best_track is not None and best_iou > self.iou_gate:
                    if best_track.instance is None:
                        best_track.instance = assignment.instance
                        best_track.source_bbox = assignment.detection.bbox
                        best_track.source_confidence = assignment.detection.confidence
                        event = "merged metadata onto existing track"
                    else:
                        event = "suppressed duplicate detection"
                    entry = {
                        "event": event,
                        "object_name": assignment.instance.object_name,
                        "bbox": list(assignment.detection.bbox),
                        "confidence": assignment.detection.confidence,
                        "track_id": best_track.track_id,
                        "iou": best_iou,
                    }
                    self.suppression_log.append(entry)
                    logger.info("%s", entry)
                    continue
                survivors.append(assignment)

            if not survivors:
                return []

            boxes = [a.detection.bbox for a in survivors]
            handle, snapshot = gateway.tracker_update(
                frame, boxes, state_handle=self.state_handle, frame_index=self.frame_index
            )
            known = set(self.tracks)
            new_entries = [(tid, rle) for tid, rle in snapshot.entries if tid not in known]
            if len(new_entries) != len(survivors):
                raise ProtocolViolation(
                    f"tracker created {len(new_entries)} tracks for {len(survivors)} boxes"
                )
            self.state_handle = handle
            created: list[tuple[Track, ObjectInstance]] = []
            # The tracker contract appends one new track per added box, in
            # submission order.
            for (tid, rle), assignment in zip(new_entries, survivors):
                track = Track(
                    track_id=tid,
                    instance=assignment.instance,
                    mask_rle=rle,
                    bbox=None,
                    birth_frame=self.frame_index,
                    source_bbox=assignment.detection.bbox,
                    source_confidence=assignment.detection.confidence,
                )
                self._apply_snapshot_entry(track, rle)
                self.tracks[tid] = track
                created.append((track, assignment.instance))
            # Refresh masks of pre-existing tracks from the same snapshot.
            for tid, rle in snapshot.entries:
                if tid in known:
                    self._apply_snapshot_entry(self.tracks[tid], rle)
            return created

    def step_frame(self, frame: Frame, gateway) -> list[dict]:
        """Advance the tracker one frame; returns exportable track dicts.

        Tracks whose mask stays empty beyond the patience window transition
        to lost. The frame counter only moves on success.
        """
        with self._lock:
            if self.state_handle is not None and self.tracks:
                _, snapshot = gateway.tracker_update(
                    frame, [], state_handle=self.state_handle,
                    frame_index=self.frame_index + 1,
                )
                by_id = dict(snapshot.entries)
                for track in self.tracks.values():
                    rle = by_id.get(track.track_id)
                    if rle is None:
                        continue
                    self._apply_snapshot_entry(track, rle)
                    if track.status == REJECTED:
                        continue
                    if track.bbox is None:
                        track.miss_count += 1
                        if track.status == LIVE and track.miss_count > self.patience:
                            track.status = LOST
                            logger.info("track %d lost after %d empty frames",
                                        track.track_id, track.miss_count)
                    else:
                        track.miss_count = 0
            self.frame_index += 1
            return [t.to_dict() for t in self.exportable_tracks()]

    def reject(self, track_id: int) -> None:
        with self._lock:
            self.tracks[track_id].status = REJECTED

    def correct(self, track_id: int, instance: ObjectInstance) -> None:
        with self._lock:
            self.tracks[track_id].instance = instance

    def snapshot_line(self) -> str:
        """One JSON line for the per-frame snapshot export."""
        with self._lock:
            tracks = sorted(self.exportable_tracks(), key=lambda t: t.track_id)
            return json.dumps(
                {"frame": self.frame_index, "tracks": [t.to_dict() for t in tracks]}
            )
