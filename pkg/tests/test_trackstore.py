import json
import random

from PIL import Image

from groundtrack.description import AttributeSchema, parse_structured_description
from groundtrack.gateway.mocks import MockTrackerBackend
from groundtrack.gateway.services import Detection
from groundtrack.grounding import curate
from groundtrack.images import Frame
from groundtrack.trackstore import LIVE, LOST, TrackRegistry

from conftest import build_gateway
from oracles import iou_ref


def make_frame(w=320, h=240):
    return Frame(image=Image.new("RGB", (w, h), (230, 230, 230)))


def make_grounding(boxes, confidences=None, names=None):
    n = len(boxes)
    confidences = confidences or [0.9 - 0.01 * i for i in range(n)]
    names = names or [f"obj{i}" for i in range(n)]
    schema = AttributeSchema()
    raw = json.dumps(
        [{"object_name": names[i], "description": f"thing {names[i]}"} for i in range(n)]
    )
    desc = parse_structured_description(raw, schema)
    detections = [
        Detection(prompt_index=i, bbox=tuple(map(float, boxes[i])), confidence=confidences[i])
        for i in range(n)
    ]
    return curate(desc, detections, odf=1.0)


def test_empty_registry_admits_all():
    gateway = build_gateway()
    registry = TrackRegistry()
    grounding = make_grounding([(10, 10, 40, 40), (60, 10, 90, 40), (110, 10, 140, 40)])
    created = registry.admit_detections(grounding, make_frame(), gateway)
    assert len(created) == 3
    names = [t.instance.object_name for t in registry.live_tracks()]
    assert sorted(names) == ["obj0", "obj1", "obj2"]


def test_overlapping_detection_suppressed():
    gateway = build_gateway()
    registry = TrackRegistry()
    first = make_grounding([(0, 0, 10, 10)])
    registry.admit_detections(first, make_frame(), gateway)
    # (1,1,10,10) vs track box: IoU 81/100 > 0.6 against the detection box;
    # the stored track box is the inclusive mock mask's bbox (0,0,11,11).
    incoming = make_grounding([(1, 1, 10, 10)], names=["obj0_again"])
    track_box = registry.live_tracks()[0].bbox
    assert iou_ref((1, 1, 10, 10), track_box) > 0.6
    created = registry.admit_detections(incoming, make_frame(), gateway)
    assert created == []
    assert len(registry.tracks) == 1
    assert registry.suppression_log


def test_disjoint_detection_admitted():
    gateway = build_gateway()
    registry = TrackRegistry()
    registry.admit_detections(make_grounding([(0, 0, 10, 10)]), make_frame(), gateway)
    incoming = make_grounding([(20, 20, 30, 30)], names=["newcomer"])
    created = registry.admit_detections(incoming, make_frame(), gateway)
    assert len(created) == 1
    assert created[0][1].object_name == "newcomer"


def test_metadata_merge_only_fills_empty_slot():
    gateway = build_gateway()
    registry = TrackRegistry()
    grounding = make_grounding([(0, 0, 20, 20)])
    registry.admit_detections(grounding, make_frame(), gateway)
    track = registry.live_tracks()[0]
    original_instance = track.instance
    overlapping = make_grounding([(1, 1, 20, 20)], names=["other"])
    registry.admit_detections(overlapping, make_frame(), gateway)
    assert track.instance is original_instance  # filled slot never overwritten


def test_readmission_is_idempotent():
    gateway = build_gateway()
    registry = TrackRegistry()
    grounding = make_grounding([(10, 10, 60, 60), (100, 100, 150, 150)])
    registry.admit_detections(grounding, make_frame(), gateway)
    assert len(registry.tracks) == 2
    created = registry.admit_detections(grounding, make_frame(), gateway)
    assert created == []
    assert len(registry.tracks) == 2


def test_suppression_soundness_randomized():
    rng = random.Random(5)
    for _ in range(60):
        gateway = build_gateway()
        registry = TrackRegistry()
        n_existing = rng.randint(1, 5)
        boxes = []
        for _ in range(n_existing):
            x = rng.randint(0, 250)
            y = rng.randint(0, 170)
            w = rng.randint(12, 60)
            h = rng.randint(12, 60)
            boxes.append((x, y, min(319, x + w), min(239, y + h)))
        registry.admit_detections(make_grounding(boxes), make_frame(), gateway)
        pre_existing = {t.track_id: t.bbox for t in registry.live_tracks()}

        m = rng.randint(1, 5)
        new_boxes = []
        for _ in range(m):
            x = rng.randint(0, 250)
            y = rng.randint(0, 170)
            w = rng.randint(12, 60)
            h = rng.randint(12, 60)
            new_boxes.append((x, y, min(319, x + w), min(239, y + h)))
        created = registry.admit_detections(
            make_grounding(new_boxes, names=[f"new{i}" for i in range(m)]),
            make_frame(),
            gateway,
        )
        for track, _ in created:
            for old_box in pre_existing.values():
                assert iou_ref(track.source_bbox, old_box) <= registry.iou_gate + 1e-9


def test_step_frame_identity_tracker():
    gateway = build_gateway()
    registry = TrackRegistry()
    registry.admit_detections(make_grounding([(10, 10, 40, 40)]), make_frame(), gateway)
    mask_before = registry.live_tracks()[0].mask_rle
    registry.step_frame(make_frame(), gateway)
    assert registry.frame_index == 1
    assert registry.live_tracks()[0].mask_rle == mask_before


def test_patience_transitions_to_lost():
    tracker = MockTrackerBackend(empty_after_steps={0: 0})  # empty from first step
    gateway = build_gateway(tracker=tracker)
    registry = TrackRegistry(patience=5)
    registry.admit_detections(make_grounding([(10, 10, 40, 40)]), make_frame(), gateway)
    track = registry.tracks[0]
    for step in range(1, 6):
        registry.step_frame(make_frame(), gateway)
        assert track.status == LIVE, f"should still be live at empty step {step}"
    registry.step_frame(make_frame(), gateway)  # 6th consecutive empty frame
    assert track.status == LOST
    assert registry.frame_index == 6


def test_step_with_empty_registry_still_counts_frames():
    gateway = build_gateway()
    registry = TrackRegistry()
    exported = registry.step_frame(make_frame(), gateway)
    assert exported == []
    assert registry.frame_index == 1


def test_rejected_tracks_not_exported_and_stay_rejected():
    gateway = build_gateway()
    registry = TrackRegistry()
    registry.admit_detections(make_grounding([(10, 10, 40, 40)]), make_frame(), gateway)
    registry.reject(0)
    assert registry.exportable_tracks() == []
    registry.step_frame(make_frame(), gateway)
    assert registry.tracks[0].status == "rejected"
    line = json.loads(registry.snapshot_line())
    assert line["tracks"] == []


def test_tracker_contract_guard():
    from groundtrack.errors import ProtocolViolation
    from groundtrack.geometry import encode_rle
    import numpy as np

    def stingy_tracker(path, payload):
        # Violates the contract: returns no tracks for the submitted boxes.
        return {"state_id": "s", "tracks": []}

    gateway = build_gateway(tracker=stingy_tracker)
    registry = TrackRegistry()
    import pytest
    with pytest.raises(ProtocolViolation):
        registry.admit_detections(make_grounding([(0, 0, 10, 10)]), make_frame(), gateway)
    assert registry.tracks == {}  # registry untouched on failure


def test_metadata_conservation_through_steps_and_admissions():
    gateway = build_gateway()
    registry = TrackRegistry()
    registry.admit_detections(
        make_grounding([(10, 10, 40, 40), (100, 50, 150, 90)]), make_frame(), gateway
    )
    refs_before = sorted(
        t.instance.object_name for t in registry.tracks.values() if t.instance
    )
    registry.step_frame(make_frame(), gateway)
    registry.admit_detections(
        make_grounding([(200, 150, 240, 190)], names=["late"]), make_frame(), gateway
    )
    registry.step_frame(make_frame(), gateway)
    refs_after = sorted(
        t.instance.object_name
        for t in registry.tracks.values()
        if t.instance and t.status != "rejected"
    )
    assert set(refs_before) <= set(refs_after)  # tracking never drops metadata
    registry.reject(0)
    refs_final = sorted(
        t.instance.object_name
        for t in registry.tracks.values()
        if t.instance and t.status != "rejected"
    )
    assert len(refs_final) == len(refs_after) - 1  # only rejection removes


def test_bbox_mask_coherence_after_steps():
    from groundtrack.geometry import decode_rle, mask_to_bbox

    gateway = build_gateway()
    registry = TrackRegistry()
    registry.admit_detections(
        make_grounding([(10, 10, 40, 40), (100, 50, 150, 90)]), make_frame(), gateway
    )
    for _ in range(3):
        registry.step_frame(make_frame(), gateway)
    for track in registry.live_tracks():
        assert track.bbox == mask_to_bbox(decode_rle(track.mask_rle))
