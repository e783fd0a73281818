"""Box and mask geometry.

Boxes are (x0, y0, x1, y1) in pixel coordinates, half-open on both axes:
a box covers pixels with x0 <= x < x1 and y0 <= y < y1. Masks are 2-D
numpy bool arrays indexed [row, col] and travel over the wire as COCO-style
uncompressed run-length counts (column-major, first count is zeros).
"""

from __future__ import annotations

import numpy as np

from .errors import EmptyMask

Box = tuple[float, float, float, float]


def box_area(box: Box) -> float:
    x0, y0, x1, y1 = box
    return max(0.0, x1 - x0) * max(0.0, y1 - y0)


def clamp_box(box: Box, width: int, height: int) -> Box:
    """Clamp a box to image bounds. May produce a zero-area box."""
    x0, y0, x1, y1 = box
    return (
        min(max(x0, 0.0), float(width)),
        min(max(y0, 0.0), float(height)),
        min(max(x1, 0.0), float(width)),
        min(max(y1, 0.0), float(height)),
    )


def is_valid_box(box: Box) -> bool:
    x0, y0, x1, y1 = box
    return x0 < x1 and y0 < y1


def iou(a: Box, b: Box) -> float:
    """Intersection over union; 0.0 for disjoint or degenerate boxes."""
    ix0 = max(a[0], b[0])
    iy0 = max(a[1], b[1])
    ix1 = min(a[2], b[2])
    iy1 = min(a[3], b[3])
    iw = max(0.0, ix1 - ix0)
    ih = max(0.0, iy1 - iy0)
    inter = iw * ih
    if inter <= 0.0:
        return 0.0
    union = box_area(a) + box_area(b) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def pad_box(box: Box, margin: float, width: int, height: int) -> Box:
    """Grow a box by `margin` (fraction of its own size) per side, clamped."""
    x0, y0, x1, y1 = box
    dx = (x1 - x0) * margin
    dy = (y1 - y0) * margin
    return clamp_box((x0 - dx, y0 - dy, x1 + dx, y1 + dy), width, height)


# --- run-length masks --------------------------------------------------------

def encode_rle(mask: np.ndarray) -> dict:
    """Encode a bool mask as uncompressed COCO RLE.

    Counts run column-major (Fortran order) and always start with the number
    of zero pixels, which may be 0.
    """
    if mask.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {mask.shape}")
    h, w = mask.shape
    flat = np.asarray(mask, dtype=bool).flatten(order="F")
    counts: list[int] = []
    if flat.size == 0:
        return {"size": [h, w], "counts": [0]}
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    runs = np.diff(np.concatenate(([0], changes, [flat.size])))
    if flat[0]:
        counts.append(0)
    counts.extend(int(r) for r in runs)
    return {"size": [h, w], "counts": counts}


def decode_rle(rle: dict) -> np.ndarray:
    """Decode uncompressed COCO RLE into a bool mask of shape (h, w)."""
    h, w = rle["size"]
    counts = rle["counts"]
    total = sum(counts)
    if total != h * w:
        raise ValueError(f"RLE counts sum to {total}, expected {h * w}")
    flat = np.zeros(h * w, dtype=bool)
    pos = 0
    value = False
    for count in counts:
        if value:
            flat[pos : pos + count] = True
        pos += count
        value = not value
    return flat.reshape((h, w), order="F")


def mask_area(rle: dict) -> int:
    # Odd-position counts are the one-runs.
    return int(sum(rle["counts"][1::2]))


def mask_to_bbox(mask: np.ndarray) -> Box:
    """Tight half-open bounds of the set pixels.

    Raises EmptyMask rather than return a zero box, so callers can tell
    "object vanished" apart from "object at origin".
    """
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        raise EmptyMask("mask has no set pixels")
    cols = np.flatnonzero(mask.any(axis=0))
    return (
        float(cols[0]),
        float(rows[0]),
        float(cols[-1] + 1),
        float(rows[-1] + 1),
    )
