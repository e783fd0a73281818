"""Synthetic world generation: deterministic scenes rendered as PNG images
with matching mock-service fixtures and COCO/custom annotation files.

Each object is a solid uniquely-colored rectangle, so the mock detector can
be scripted exactly, the mock validator can identify crops by their center
pixel, and geometrically perfect closed-loop runs are possible. Seeded
generators produce byte-identical fixtures.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

from PIL import Image, ImageDraw

from .gateway.mocks import BACKGROUND_COLOR, WorldObject
from .geometry import Box

ADJECTIVES = (
    "red", "blue", "green", "yellow", "purple", "orange",
    "teal", "pink", "brown", "silver", "black", "white",
)
NOUNS = (
    "mug", "bottle", "book", "hammer", "apple", "box", "plate",
    "shoe", "can", "brush", "cup", "pen", "bowl", "lamp", "sponge",
)

# Saturated palette; distinct from the light-gray background.
PALETTE = tuple(
    (r, g, b)
    for r in (40, 120, 200)
    for g in (40, 120, 200)
    for b in (40, 120, 200)
    if (r, g, b) != (200, 200, 200)
)


@dataclass
class SceneSpec:
    file: str
    width: int
    height: int
    objects: list[WorldObject]
    describe_wrap: str | None = None


def _render(spec: SceneSpec, out_dir: Path) -> None:
    img = Image.new("RGB", (spec.width, spec.height), BACKGROUND_COLOR)
    draw = ImageDraw.Draw(img)
    for obj in spec.objects:
        x0, y0, x1, y1 = (int(v) for v in obj.bbox)
        # Half-open GT box: fill pixel columns x0..x1-1, rows y0..y1-1.
        draw.rectangle((x0, y0, x1 - 1, y1 - 1), fill=obj.color)
    img.save(out_dir / spec.file)


def write_world(scenes: list[SceneSpec], out_dir: str | Path,
                faults: dict | None = None,
                chat_rules: list[dict] | None = None) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for spec in scenes:
        _render(spec, out_dir)
        entry = {
            "file": spec.file,
            "width": spec.width,
            "height": spec.height,
            "objects": [o.to_dict() for o in spec.objects],
        }
        if spec.describe_wrap:
            entry["describe_wrap"] = spec.describe_wrap
        entries.append(entry)
    world = {"images": entries}
    if faults:
        world["faults"] = faults
    if chat_rules:
        world["chat"] = {"rules": chat_rules}
    path = out_dir / "world.json"
    path.write_text(json.dumps(world, indent=2))
    return path


def write_coco(scenes: list[SceneSpec], out_dir: str | Path,
               filename: str = "coco.json") -> Path:
    out_dir = Path(out_dir)
    names = sorted({o.object_name for s in scenes for o in s.objects})
    cat_ids = {name: i + 1 for i, name in enumerate(names)}
    images, annotations = [], []
    ann_id = 1
    for image_id, spec in enumerate(scenes, start=1):
        images.append(
            {"id": image_id, "file_name": spec.file, "width": spec.width, "height": spec.height}
        )
        for obj in spec.objects:
            x0, y0, x1, y1 = obj.bbox
            annotations.append(
                {
                    "id": ann_id,
                    "image_id": image_id,
                    "category_id": cat_ids[obj.object_name],
                    "bbox": [x0, y0, x1 - x0, y1 - y0],
                }
            )
            ann_id += 1
    payload = {
        "images": images,
        "categories": [{"id": i, "name": n} for n, i in cat_ids.items()],
        "annotations": annotations,
    }
    path = out_dir / filename
    path.write_text(json.dumps(payload, indent=2))
    return path


def write_custom(scenes: list[SceneSpec], out_dir: str | Path,
                 filename: str = "custom.json") -> Path:
    out_dir = Path(out_dir)
    images = []
    for spec in scenes:
        images.append(
            {
                "file": spec.file,
                "width": spec.width,
                "height": spec.height,
                "annotations": [
                    {"bbox": list(o.bbox), "description": o.description}
                    for o in spec.objects
                ],
            }
        )
    path = out_dir / filename
    path.write_text(json.dumps({"images": images}, indent=2))
    return path


def _grid_cells(width: int, height: int, cols: int = 4, rows: int = 3) -> list[Box]:
    cw, ch = width // cols, height // rows
    return [
        (c * cw, r * ch, (c + 1) * cw, (r + 1) * ch)
        for r in range(rows)
        for c in range(cols)
    ]


def _box_in_cell(rng: random.Random, cell: Box, min_size: int = 24, margin: int = 4) -> Box:
    cx0, cy0, cx1, cy1 = (int(v) for v in cell)
    max_w = (cx1 - cx0) - 2 * margin
    max_h = (cy1 - cy0) - 2 * margin
    w = rng.randint(min_size, max_w)
    h = rng.randint(min_size, max_h)
    x0 = rng.randint(cx0 + margin, cx1 - margin - w)
    y0 = rng.randint(cy0 + margin, cy1 - margin - h)
    return (float(x0), float(y0), float(x0 + w), float(y0 + h))


def make_scene(
    rng: random.Random,
    file: str,
    n_objects: int,
    width: int = 320,
    height: int = 240,
    name_pool: list[tuple[str, str]] | None = None,
    task_relevant_count: int = 0,
) -> SceneSpec:
    """One scene with non-overlapping objects in distinct grid cells."""
    cells = _grid_cells(width, height)
    if n_objects > len(cells):
        raise ValueError(f"at most {len(cells)} objects per scene")
    chosen_cells = rng.sample(cells, n_objects)
    if name_pool is None:
        pairs = [(a, n) for a in ADJECTIVES for n in NOUNS]
        name_pool = rng.sample(pairs, n_objects)
    colors = rng.sample(PALETTE, n_objects)
    objects = []
    for i, ((adj, noun), cell, color) in enumerate(zip(name_pool, chosen_cells, colors)):
        objects.append(
            WorldObject(
                uid=f"{file}:obj{i}",
                object_name=f"{adj} {noun}",
                description=f"small {adj} {noun} with a plain finish",
                bbox=_box_in_cell(rng, cell),
                color=color,
                confidence=round(0.5 + 0.49 * rng.random(), 3),
                task_relevant=i < task_relevant_count,
            )
        )
    return SceneSpec(file=file, width=width, height=height, objects=objects)


def build_benchmark_world(
    out_dir: str | Path,
    n_images: int = 10,
    seed: int = 0,
    objects_per_image: tuple[int, int] = (2, 4),
    task_relevant_count: int = 1,
) -> tuple[Path, Path, Path]:
    """Perfect closed-loop fixture: world.json + coco.json + custom.json."""
    rng = random.Random(seed)
    scenes = []
    for i in range(n_images):
        n = rng.randint(*objects_per_image)
        scenes.append(
            make_scene(rng, f"img_{i:03d}.png", n,
                       task_relevant_count=min(task_relevant_count, n))
        )
    world = write_world(scenes, out_dir)
    coco = write_coco(scenes, out_dir)
    custom = write_custom(scenes, out_dir)
    return world, coco, custom


def build_error_world(
    out_dir: str | Path,
    n_images: int = 10,
    seed: int = 0,
    objects_per_image: tuple[int, int] = (4, 6),
    misplaced_fraction: float = 0.3,
    invalid_fraction: float = 0.15,
) -> tuple[Path, Path]:
    """Corpus with scripted grounding errors and a mostly-correct validator.

    A seeded fraction of objects have their detector box misplaced onto empty
    background: the honest validator sees nothing in the crop and rejects the
    grounding, which removes false positives (precision up). A seeded
    fraction of the correctly grounded objects carry a scripted invalid
    validation answer: those rejections cost true positives (recall down).
    Every corpus gets at least one of each, so the direction of the shift is
    guaranteed, while magnitudes stay seed-dependent.
    """
    rng = random.Random(seed)
    scenes = []
    for i in range(n_images):
        n = rng.randint(*objects_per_image)
        scene = make_scene(rng, f"img_{i:03d}.png", n)
        free_cells = [
            cell for cell in _grid_cells(scene.width, scene.height)
            if not any(_overlaps(cell, o.bbox) for o in scene.objects)
        ]
        rng.shuffle(free_cells)
        indices = list(range(n))
        rng.shuffle(indices)
        n_misplaced = min(len(free_cells), max(1, round(n * misplaced_fraction)))
        for k, idx in enumerate(indices[:n_misplaced]):
            scene.objects[idx].detector_bbox = _box_in_cell(rng, free_cells[k])
        correct = indices[n_misplaced:]
        n_invalid = min(len(correct), max(1, round(len(correct) * invalid_fraction)))
        for idx in correct[:n_invalid]:
            scene.objects[idx].validator_response = "invalid"
        scenes.append(scene)
    world = write_world(scenes, out_dir)
    coco = write_coco(scenes, out_dir)
    return world, coco


def _overlaps(a: Box, b: Box) -> bool:
    return not (b[2] <= a[0] or b[0] >= a[2] or b[3] <= a[1] or b[1] >= a[3])


def build_sequence(
    out_dir: str | Path,
    n_frames: int = 30,
    n_objects: int = 3,
    seed: int = 0,
    width: int = 320,
    height: int = 240,
    velocity: tuple[int, int] = (2, 0),
    entrant_frame: int | None = None,
) -> Path:
    """Frame sequence with boxes translating at a constant velocity; one
    optional extra object entering mid-sequence. Returns the world.json path."""
    rng = random.Random(seed)
    pairs = [(a, n) for a in ADJECTIVES for n in NOUNS]
    total = n_objects + (1 if entrant_frame is not None else 0)
    names = rng.sample(pairs, total)
    colors = rng.sample(PALETTE, total)
    travel = velocity[0] * n_frames, velocity[1] * n_frames

    base_boxes: list[Box] = []
    size = 40
    for i in range(total):
        # Lay objects out in distinct rows; leave room for the full travel.
        y0 = 20 + i * ((height - 60) // max(total, 1))
        x0 = 10 if velocity[0] >= 0 else width - 10 - size - abs(travel[0])
        base_boxes.append((float(x0), float(y0), float(x0 + size), float(y0 + size)))

    scenes = []
    for f in range(n_frames):
        objects = []
        for i in range(total):
            if entrant_frame is not None and i == total - 1 and f < entrant_frame:
                continue
            adj, noun = names[i]
            x0, y0, x1, y1 = base_boxes[i]
            dx, dy = velocity[0] * f, velocity[1] * f
            objects.append(
                WorldObject(
                    uid=f"seq:obj{i}",
                    object_name=f"{adj} {noun}",
                    description=f"small {adj} {noun} with a plain finish",
                    bbox=(x0 + dx, y0 + dy, x1 + dx, y1 + dy),
                    color=colors[i],
                    confidence=0.9,
                )
            )
        scenes.append(SceneSpec(file=f"frame_{f:03d}.png", width=width, height=height,
                                objects=objects))
    return write_world(scenes, out_dir)
