"""Detection metrics: COCO-style mAP plus precision/recall/F1 with an
optional F1-maximizing confidence sweep.

Conventions, shared with the brute-force test oracle: detections sort by
descending confidence with input order breaking ties; greedy matching takes
the unmatched ground-truth box of the same image and class with the highest
IoU (lowest index on ties); AP uses all-point interpolation; mAP averages
IoU thresholds 0.50:0.05:0.95 over classes that have ground truth.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from ..geometry import Box, iou

MAP_IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
PR_IOU_THRESHOLD = 0.5


@dataclass(frozen=True)
class EvalDetection:
    image_id: str
    class_name: str
    bbox: Box
    confidence: float


@dataclass(frozen=True)
class GroundTruth:
    image_id: str
    class_name: str
    bbox: Box


@dataclass
class MetricsReport:
    mean_ap: float
    precision: float
    recall: float
    f1: float
    per_class_ap: dict[str, float]
    threshold: float
    tp: int
    fp: int
    fn: int
    flags: list[str] = field(default_factory=list)

    def to_payload(self) -> dict:
        return {
            "mAP": self.mean_ap,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "per_class_ap": self.per_class_ap,
            "confidence_threshold": self.threshold,
            "counts": {"tp": self.tp, "fp": self.fp, "fn": self.fn},
            "flags": self.flags,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_payload(), indent=2)


def _ordered(detections: list[EvalDetection]) -> list[EvalDetection]:
    return [d for _, d in sorted(enumerate(detections), key=lambda p: (-p[1].confidence, p[0]))]


def _greedy_counts(
    detections: list[EvalDetection],
    ground_truth: list[GroundTruth],
    iou_threshold: float,
    conf_threshold: float,
) -> tuple[int, int, int]:
    """TP/FP/FN with confidence-ordered greedy matching, class- and image-aware."""
    gt_by_key: dict[tuple[str, str], list[GroundTruth]] = {}
    for gt in ground_truth:
        gt_by_key.setdefault((gt.image_id, gt.class_name), []).append(gt)
    matched: dict[tuple[str, str], list[bool]] = {
        key: [False] * len(boxes) for key, boxes in gt_by_key.items()
    }
    tp = fp = 0
    for det in _ordered(detections):
        if det.confidence < conf_threshold:
            continue
        key = (det.image_id, det.class_name)
        candidates = gt_by_key.get(key, [])
        best_iou = 0.0
        best_index = -1
        for idx, gt in enumerate(candidates):
            if matched[key][idx]:
                continue
            overlap = iou(det.bbox, gt.bbox)
            if overlap > best_iou:
                best_iou = overlap
                best_index = idx
        if best_index >= 0 and best_iou >= iou_threshold:
            matched[key][best_index] = True
            tp += 1
        else:
            fp += 1
    fn = len(ground_truth) - tp
    return tp, fp, fn


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def average_precision(
    detections: list[EvalDetection],
    ground_truth: list[GroundTruth],
    class_name: str,
    iou_threshold: float,
) -> float:
    """All-point-interpolated AP for one class at one IoU threshold."""
    gts = [g for g in ground_truth if g.class_name == class_name]
    if not gts:
        return 0.0
    dets = [d for d in _ordered(detections) if d.class_name == class_name]
    gt_by_image: dict[str, list[GroundTruth]] = {}
    for gt in gts:
        gt_by_image.setdefault(gt.image_id, []).append(gt)
    matched = {image_id: [False] * len(boxes) for image_id, boxes in gt_by_image.items()}

    hits: list[bool] = []
    for det in dets:
        candidates = gt_by_image.get(det.image_id, [])
        best_iou = 0.0
        best_index = -1
        for idx, gt in enumerate(candidates):
            if matched[det.image_id][idx]:
                continue
            overlap = iou(det.bbox, gt.bbox)
            if overlap > best_iou:
                best_iou = overlap
                best_index = idx
        if best_index >= 0 and best_iou >= iou_threshold:
            matched[det.image_id][best_index] = True
            hits.append(True)
        else:
            hits.append(False)

    precisions: list[float] = []
    recalls: list[float] = []
    tp = 0
    for rank, hit in enumerate(hits, start=1):
        if hit:
            tp += 1
        precisions.append(tp / rank)
        recalls.append(tp / len(gts))

    # Monotone envelope, then integrate over recall steps.
    for i in range(len(precisions) - 2, -1, -1):
        precisions[i] = max(precisions[i], precisions[i + 1])
    ap = 0.0
    previous_recall = 0.0
    for p, r in zip(precisions, recalls):
        if r > previous_recall:
            ap += (r - previous_recall) * p
            previous_recall = r
    return ap


def compute_metrics(
    detections: list[EvalDetection],
    ground_truth: list[GroundTruth],
    sweep: bool = False,
) -> MetricsReport:
    """Full report over a matched detection set.

    With sweep=True, every distinct confidence value is tried as the
    threshold for P/R/F1 and the F1-maximizing one reported (lowest value on
    ties); otherwise all detections count. mAP always uses all detections.
    """
    flags: list[str] = []
    if not ground_truth:
        tp, fp, fn = 0, len(detections), 0
        precision, recall, f1 = _prf(tp, fp, fn)
        flags.append("empty_ground_truth")
        return MetricsReport(
            mean_ap=0.0, precision=precision, recall=recall, f1=f1,
            per_class_ap={}, threshold=0.0, tp=tp, fp=fp, fn=fn, flags=flags,
        )

    threshold = 0.0
    if sweep and detections:
        best_f1 = -1.0
        for candidate in sorted({d.confidence for d in detections}):
            counts = _greedy_counts(detections, ground_truth, PR_IOU_THRESHOLD, candidate)
            _, _, f1_at = _prf(*counts)
            if f1_at > best_f1:
                best_f1 = f1_at
                threshold = candidate
        flags.append("threshold_swept")

    tp, fp, fn = _greedy_counts(detections, ground_truth, PR_IOU_THRESHOLD, threshold)
    precision, recall, f1 = _prf(tp, fp, fn)

    class_names = sorted({g.class_name for g in ground_truth})
    per_class_ap: dict[str, float] = {}
    for name in class_names:
        aps = [
            average_precision(detections, ground_truth, name, tau)
            for tau in MAP_IOU_THRESHOLDS
        ]
        per_class_ap[name] = sum(aps) / len(aps)
    mean_ap = sum(per_class_ap.values()) / len(per_class_ap)

    return MetricsReport(
        mean_ap=mean_ap, precision=precision, recall=recall, f1=f1,
        per_class_ap=per_class_ap, threshold=threshold, tp=tp, fp=fp, fn=fn,
        flags=flags,
    )
