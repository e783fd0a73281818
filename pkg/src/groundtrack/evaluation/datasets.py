"""Dataset ingestion: standard COCO annotation files and the custom format
with exhaustive per-image free-text descriptions instead of a global class
taxonomy.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import SchemaViolation
from ..geometry import Box
from .metrics import GroundTruth

COCO = "coco"
CUSTOM = "custom"


@dataclass
class DatasetImage:
    image_id: str
    file: str
    width: int
    height: int
    ground_truth: list[GroundTruth] = field(default_factory=list)

    def class_names(self) -> list[str]:
        seen = dict.fromkeys(g.class_name for g in self.ground_truth)
        return list(seen)


@dataclass
class Dataset:
    format: str
    images: list[DatasetImage]
    class_names: list[str]  # global taxonomy (COCO); empty for custom
    root: Path

    def all_ground_truth(self) -> list[GroundTruth]:
        return [g for img in self.images for g in img.ground_truth]

    def image_path(self, image: DatasetImage) -> Path:
        return self.root / image.file


def _check_box(box: Box, path: str, context: str) -> Box:
    x0, y0, x1, y1 = box
    if not (x0 < x1 and y0 < y1):
        raise SchemaViolation(f"degenerate box {list(box)}", path=path, context=context)
    return box


def _load_coco(path: Path) -> Dataset:
    data = json.loads(path.read_text())
    for key in ("images", "categories", "annotations"):
        if key not in data:
            raise SchemaViolation(f"missing top-level key {key!r}", path=str(path))
    categories: dict[int, str] = {}
    for i, cat in enumerate(data["categories"]):
        if "id" not in cat or "name" not in cat:
            raise SchemaViolation("category needs id and name", path=str(path), context=f"categories[{i}]")
        categories[cat["id"]] = cat["name"]
    images: dict[int, DatasetImage] = {}
    for i, img in enumerate(data["images"]):
        try:
            images[img["id"]] = DatasetImage(
                image_id=str(img["id"]),
                file=img["file_name"],
                width=int(img["width"]),
                height=int(img["height"]),
            )
        except KeyError as exc:
            raise SchemaViolation(f"image missing {exc}", path=str(path), context=f"images[{i}]") from None
    for i, ann in enumerate(data["annotations"]):
        context = f"annotations[{i}]"
        try:
            image = images[ann["image_id"]]
            category = categories[ann["category_id"]]
            x, y, w, h = (float(v) for v in ann["bbox"])
        except KeyError as exc:
            raise SchemaViolation(f"annotation references unknown {exc}", path=str(path), context=context) from None
        except (TypeError, ValueError):
            raise SchemaViolation("bbox must be [x, y, w, h]", path=str(path), context=context) from None
        box = _check_box((x, y, x + w, y + h), str(path), context)
        image.ground_truth.append(
            GroundTruth(image_id=image.image_id, class_name=category, bbox=box)
        )
    return Dataset(
        format=COCO,
        images=list(images.values()),
        class_names=[categories[k] for k in sorted(categories)],
        root=path.parent,
    )


def _load_custom(path: Path) -> Dataset:
    data = json.loads(path.read_text())
    if "images" not in data:
        raise SchemaViolation("missing top-level key 'images'", path=str(path))
    images: list[DatasetImage] = []
    for i, img in enumerate(data["images"]):
        context = f"images[{i}]"
        try:
            entry = DatasetImage(
                image_id=img.get("id", img["file"]),
                file=img["file"],
                width=int(img["width"]),
                height=int(img["height"]),
            )
        except KeyError as exc:
            raise SchemaViolation(f"image missing {exc}", path=str(path), context=context) from None
        for j, ann in enumerate(img.get("annotations", [])):
            ann_context = f"{context}.annotations[{j}]"
            try:
                box = tuple(float(v) for v in ann["bbox"])
                description = ann["description"]
            except (KeyError, TypeError, ValueError) as exc:
                raise SchemaViolation(f"bad annotation: {exc}", path=str(path), context=ann_context) from None
            if len(box) != 4:
                raise SchemaViolation("bbox must have 4 values", path=str(path), context=ann_context)
            _check_box(box, str(path), ann_context)
            entry.ground_truth.append(
                GroundTruth(image_id=entry.image_id, class_name=description, bbox=box)
            )
        images.append(entry)
    return Dataset(format=CUSTOM, images=images, class_names=[], root=path.parent)


def load_dataset(path: str | Path, format: str) -> Dataset:
    """Load a dataset file. Custom-format matching later restricts each
    image's candidate classes to its own descriptions, with no augmented
    entries; the loader only records the structure."""
    path = Path(path)
    if not path.exists():
        raise SchemaViolation("file not found", path=str(path))
    if format == COCO:
        return _load_coco(path)
    if format == CUSTOM:
        return _load_custom(path)
    raise ValueError(f"unknown dataset format {format!r}")
