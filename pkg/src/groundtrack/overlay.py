"""File-based overlay rendering: boxes, labels, and mask outlines burned
into a copy of the frame.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import ImageDraw

from .geometry import Box, decode_rle
from .images import Frame

_COLORS = (
    (220, 40, 40), (40, 160, 40), (40, 80, 220), (200, 160, 20),
    (160, 40, 200), (20, 180, 180), (240, 120, 40), (120, 120, 120),
)


def render_overlay(
    frame: Frame,
    items: list[dict],
    out_path: str | Path,
) -> Path:
    """Draw one entry per item: {"bbox": Box, "label": str, "mask_rle": dict?}."""
    img = frame.image.copy()
    draw = ImageDraw.Draw(img)
    for i, item in enumerate(items):
        color = _COLORS[i % len(_COLORS)]
        box: Box | None = item.get("bbox")
        if box is not None:
            x0, y0, x1, y1 = (int(round(v)) for v in box)
            draw.rectangle((x0, y0, max(x0, x1 - 1), max(y0, y1 - 1)), outline=color, width=2)
            label = item.get("label", "")
            if label:
                draw.text((x0 + 2, max(0, y0 - 12)), label, fill=color)
        rle = item.get("mask_rle")
        if rle:
            mask = decode_rle(rle)
            ys, xs = np.nonzero(mask)
            # Sparse dotted fill keeps the overlay readable and cheap.
            for y, x in zip(ys[::7], xs[::7]):
                img.putpixel((int(x), int(y)), color)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    img.save(out_path)
    return out_path
