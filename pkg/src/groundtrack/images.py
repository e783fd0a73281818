"""Image handling: loading, deterministic PNG payloads, padded crops.

A Frame wraps a PIL image and caches its encoded PNG bytes so the several
model calls that ship the same frame do not re-encode it.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

from PIL import Image

from .errors import DegenerateCrop
from .geometry import Box, clamp_box, pad_box


@dataclass
class Frame:
    image: Image.Image
    name: str = ""
    _png: bytes | None = field(default=None, repr=False)

    @classmethod
    def open(cls, path: str | Path) -> "Frame":
        img = Image.open(path)
        img.load()
        return cls(image=img.convert("RGB"), name=str(path))

    @classmethod
    def from_bytes(cls, data: bytes, name: str = "") -> "Frame":
        img = Image.open(io.BytesIO(data))
        img.load()
        return cls(image=img.convert("RGB"), name=name)

    @property
    def width(self) -> int:
        return self.image.width

    @property
    def height(self) -> int:
        return self.image.height

    @property
    def size(self) -> tuple[int, int]:
        return self.image.width, self.image.height

    def png_bytes(self) -> bytes:
        if self._png is None:
            buf = io.BytesIO()
            self.image.save(buf, format="PNG")
            self._png = buf.getvalue()
        return self._png

    def crop(self, box: Box, margin: float = 0.0) -> "Frame":
        """Crop at `box`, grown by `margin` per side and clamped to bounds."""
        if margin > 0:
            box = pad_box(box, margin, self.width, self.height)
        else:
            box = clamp_box(box, self.width, self.height)
        x0, y0, x1, y1 = (int(round(v)) for v in box)
        if x1 <= x0 or y1 <= y0:
            raise DegenerateCrop(f"crop {box} has zero area within {self.size}")
        return Frame(image=self.image.crop((x0, y0, x1, y1)), name=f"{self.name}#crop")
