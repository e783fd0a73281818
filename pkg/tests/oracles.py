"""Independent oracle implementations used to cross-check the engine.

Everything here is written as plain re-derivation (full matrices, explicit
loops, exhaustive enumeration) and must stay independent of the package's
own implementations.
"""

from __future__ import annotations

import json
import math


def levenshtein_ref(a: str, b: str) -> int:
    """Full-matrix dynamic program."""
    m, n = len(a), len(b)
    dp = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(m + 1):
        dp[i][0] = i
    for j in range(n + 1):
        dp[0][j] = j
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            dp[i][j] = min(dp[i - 1][j] + 1, dp[i][j - 1] + 1, dp[i - 1][j - 1] + cost)
    return dp[m][n]


def iou_ref(a, b) -> float:
    """Step-by-step area arithmetic."""
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    overlap_x = min(ax1, bx1) - max(ax0, bx0)
    overlap_y = min(ay1, by1) - max(ay0, by0)
    if overlap_x <= 0 or overlap_y <= 0:
        return 0.0
    inter = overlap_x * overlap_y
    area_a = (ax1 - ax0) * (ay1 - ay0)
    area_b = (bx1 - bx0) * (by1 - by0)
    return inter / (area_a + area_b - inter)


def json_candidates_ref(raw: str) -> list:
    """Every substring starting with {/[ and ending with }/] that parses."""
    values = []
    for i in range(len(raw)):
        if raw[i] not in "{[":
            continue
        for j in range(i + 1, len(raw) + 1):
            if raw[j - 1] not in "}]":
                continue
            try:
                values.append(json.loads(raw[i:j]))
            except json.JSONDecodeError:
                continue
    return values


def mask_bbox_ref(mask) -> tuple[float, float, float, float] | None:
    """Explicit min/max scan over set cells."""
    min_r = min_c = None
    max_r = max_c = None
    for r in range(len(mask)):
        for c in range(len(mask[0])):
            if not mask[r][c]:
                continue
            if min_r is None or r < min_r:
                min_r = r
            if max_r is None or r > max_r:
                max_r = r
            if min_c is None or c < min_c:
                min_c = c
            if max_c is None or c > max_c:
                max_c = c
    if min_r is None:
        return None
    return (float(min_c), float(min_r), float(max_c + 1), float(max_r + 1))


def odf_resimulate(per_prompt: dict[int, list[tuple[float, tuple]]], odf: float, n: int):
    """Re-simulation of the two-pass curation.

    per_prompt maps prompt index -> [(confidence, bbox)]. Returns the ordered
    list of (prompt_index, confidence, bbox, rank) the curation must produce.
    Tie order: higher confidence, then lower prompt index, then smaller bbox.
    """
    cap = max(n, math.floor(odf * n))

    def better(x, y):
        # x, y are (conf, prompt_index, bbox); True when x precedes y.
        if x[0] != y[0]:
            return x[0] > y[0]
        if x[1] != y[1]:
            return x[1] < y[1]
        return x[2] < y[2]

    assignments = []
    leftovers = []
    ranks = {}
    for i in range(n):
        cands = [(conf, i, bbox) for conf, bbox in per_prompt.get(i, [])]
        if not cands:
            continue
        best = cands[0]
        for c in cands[1:]:
            if better(c, best):
                best = c
        assignments.append((i, best[0], best[2], 1))
        ranks[i] = 1
        leftovers.extend(c for c in cands if c is not best)

    if odf <= 1.0:
        return assignments

    # Second pass: insertion-sort the leftovers by the same order.
    ordered = []
    for c in leftovers:
        pos = 0
        while pos < len(ordered) and better(ordered[pos], c):
            pos += 1
        ordered.insert(pos, c)
    for conf, i, bbox in ordered:
        if len(assignments) >= cap:
            break
        ranks[i] += 1
        assignments.append((i, conf, bbox, ranks[i]))
    return assignments


# --- metrics ----------------------------------------------------------------------

def _sorted_dets(dets):
    indexed = list(enumerate(dets))
    indexed.sort(key=lambda p: (-p[1]["confidence"], p[0]))
    return [d for _, d in indexed]


def _greedy_match_ref(dets, gts, iou_thr, conf_thr):
    used = [False] * len(gts)
    tp = fp = 0
    for det in _sorted_dets(dets):
        if det["confidence"] < conf_thr:
            continue
        best_iou = 0.0
        best = -1
        for k, gt in enumerate(gts):
            if used[k]:
                continue
            if gt["image_id"] != det["image_id"] or gt["class"] != det["class"]:
                continue
            val = iou_ref(det["bbox"], gt["bbox"])
            if val > best_iou:
                best_iou = val
                best = k
        if best >= 0 and best_iou >= iou_thr:
            used[best] = True
            tp += 1
        else:
            fp += 1
    return tp, fp, len(gts) - tp


def _ap_ref(dets, gts, class_name, iou_thr):
    class_gts = [g for g in gts if g["class"] == class_name]
    if not class_gts:
        return 0.0
    class_dets = [d for d in _sorted_dets(dets) if d["class"] == class_name]
    used = [False] * len(class_gts)
    hits = []
    for det in class_dets:
        best_iou = 0.0
        best = -1
        for k, gt in enumerate(class_gts):
            if used[k] or gt["image_id"] != det["image_id"]:
                continue
            val = iou_ref(det["bbox"], gt["bbox"])
            if val > best_iou:
                best_iou = val
                best = k
        if best >= 0 and best_iou >= iou_thr:
            used[best] = True
            hits.append(True)
        else:
            hits.append(False)
    precisions = []
    recalls = []
    tp = 0
    for k, hit in enumerate(hits, start=1):
        if hit:
            tp += 1
        precisions.append(tp / k)
        recalls.append(tp / len(class_gts))
    ap = 0.0
    prev_recall = 0.0
    for k in range(len(hits)):
        if recalls[k] > prev_recall:
            ap += (recalls[k] - prev_recall) * max(precisions[k:])
            prev_recall = recalls[k]
    return ap


def brute_metrics(dets, gts, sweep=False):
    """Independent evaluator.

    dets: [{"image_id", "class", "bbox", "confidence"}], gts likewise without
    confidence. Returns dict with mAP, precision, recall, f1, threshold.
    """
    taus = [round(0.5 + 0.05 * i, 2) for i in range(10)]
    threshold = 0.0
    if sweep and dets:
        best_f1 = -1.0
        for cand in sorted({d["confidence"] for d in dets}):
            tp, fp, fn = _greedy_match_ref(dets, gts, 0.5, cand)
            p = tp / (tp + fp) if tp + fp else 0.0
            r = tp / (tp + fn) if tp + fn else 0.0
            f1 = 2 * p * r / (p + r) if p + r else 0.0
            if f1 > best_f1:
                best_f1 = f1
                threshold = cand
    tp, fp, fn = _greedy_match_ref(dets, gts, 0.5, threshold)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    classes = sorted({g["class"] for g in gts})
    per_class = {}
    for name in classes:
        aps = [_ap_ref(dets, gts, name, tau) for tau in taus]
        per_class[name] = sum(aps) / len(aps)
    mean_ap = sum(per_class.values()) / len(per_class) if per_class else 0.0
    return {
        "mAP": mean_ap,
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "threshold": threshold,
        "per_class": per_class,
        "tp": tp, "fp": fp, "fn": fn,
    }


# --- assignment solver -----------------------------------------------------------

def max_agreement_ref(original, proposals, group_of):
    """Exhaustive maximum over injective mappings within proposed groups.

    original: {track_id: (instance, conf)}; proposals: {track_id: name|None};
    group_of: {instance: frozenset of group members}. Agreement counts tracks
    assigned to any member of their proposed group; invalid tracks never
    assign. Returns the maximum achievable agreement count.
    """
    tracks = sorted(original)
    best = 0

    def recurse(pos: int, used: frozenset, score: int):
        nonlocal best
        if score + (len(tracks) - pos) <= best:
            return
        if pos == len(tracks):
            best = max(best, score)
            return
        track = tracks[pos]
        proposed = proposals[track]
        recurse(pos + 1, used, score)  # leave unassigned
        if proposed is not None:
            for member in sorted(group_of[proposed]):
                if member not in used:
                    recurse(pos + 1, used | {member}, score + 1)

    recurse(0, frozenset(), 0)
    return best


def enumerate_partitions(items):
    """All set partitions of a list (Bell-number many)."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for partition in enumerate_partitions(rest):
        for i in range(len(partition)):
            yield partition[:i] + [[first] + partition[i]] + partition[i + 1 :]
        yield [[first]] + partition
