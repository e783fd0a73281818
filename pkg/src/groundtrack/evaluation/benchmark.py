"""Closed-loop benchmark: run the full update mechanism per dataset image,
match labels, and compute detection metrics plus a per-step timing table.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from ..config import PipelineConfig
from ..errors import EmptyDescription
from ..images import Frame
from ..pipeline import StepTimings, export_detections, run_update
from ..trackstore import TrackRegistry
from .cache import DiskCache
from .datasets import COCO, Dataset, DatasetImage
from .labels import (
    ClassEntry,
    DetectionLabel,
    TextEmbedder,
    generate_definitions,
    load_augmented_classes,
    match_labels,
)
from .metrics import EvalDetection, MetricsReport, compute_metrics

logger = logging.getLogger(__name__)


@dataclass
class BenchmarkResult:
    metrics: MetricsReport
    timings: StepTimings
    images_processed: int
    images_failed: int
    mean_instances: float
    ungrounded_total: int
    match_records: list = field(default_factory=list)
    validation_audit: list = field(default_factory=list)

    def summary_row(self) -> dict:
        mean_update_s = sum(self.timings.mean(step) for step in self.timings.samples)
        return {
            "Ins.": round(self.mean_instances, 2),
            "Time": round(mean_update_s, 3),
            "mAP": round(self.metrics.mean_ap, 4),
            "Pre.": round(self.metrics.precision, 4),
            "Rec.": round(self.metrics.recall, 4),
            "F1": round(self.metrics.f1, 4),
        }


def _class_entries_for(dataset: Dataset, image: DatasetImage,
                       augmented: list[ClassEntry],
                       class_definitions: dict[str, str]) -> list[ClassEntry]:
    if dataset.format == COCO:
        native = [
            ClassEntry(name=n, definition=class_definitions.get(n, ""), origin="native")
            for n in dataset.class_names
        ]
        return native + augmented
    # Custom format: candidates are this image's own descriptions, no
    # augmented entries; the free-text description stands in for a class name.
    return [ClassEntry(name=n, origin="native") for n in image.class_names()]


def run_benchmark(
    dataset: Dataset,
    config: PipelineConfig,
    gateway,
    odf: float | None = None,
    validation: bool | None = None,
    sweep: bool = False,
) -> BenchmarkResult:
    """describe -> ground -> (validate) -> match -> metrics over a dataset.

    Per-image failures are logged and counted; the report flags partial
    coverage rather than aborting the run.
    """
    if odf is not None:
        config.odf = odf
    if validation is not None:
        config.validate = validation

    timings = StepTimings()
    definition_cache = DiskCache(config.resolve(config.definition_cache) if config.definition_cache else None)
    embedding_cache = DiskCache(config.resolve(config.embedding_cache) if config.embedding_cache else None)
    embedder = TextEmbedder(gateway, model_id=config.embedder.model, cache=embedding_cache)

    augmented: list[ClassEntry] = []
    class_definitions: dict[str, str] = {}
    if dataset.format == COCO:
        if config.augmented_classes:
            augmented = load_augmented_classes(config.resolve(config.augmented_classes))
        definitions = generate_definitions(
            [(name, None) for name in dataset.class_names],
            gateway, cache=definition_cache, max_concurrency=config.max_concurrency,
        )
        class_definitions = {
            name: text for name, text in zip(dataset.class_names, definitions) if text
        }

    all_detections: list[EvalDetection] = []
    match_records: list = []
    validation_audit: list = []
    instance_counts: list[int] = []
    ungrounded_total = 0
    failed = 0

    empty_images: list[str] = []
    for image in dataset.images:
        try:
            frame = Frame.open(dataset.image_path(image))
            registry = TrackRegistry(iou_gate=config.iou_gate, patience=config.patience)
            try:
                outcome = run_update(frame, registry, config, gateway, timings=timings)
            except EmptyDescription:
                # A vacuous scene is a legitimate outcome, not a failure.
                instance_counts.append(0)
                empty_images.append(image.image_id)
                continue
            instance_counts.append(len(outcome.description.instances))
            ungrounded_total += len(outcome.grounding.ungrounded)
            if outcome.validation is not None:
                for entry in outcome.validation.audit:
                    validation_audit.append({"image_id": image.image_id, **entry})

            exported = export_detections(registry)
            if not exported:
                continue
            labels = [
                (d["object_name"], d["description"]) for d in exported
            ]
            definitions = generate_definitions(
                labels, gateway, cache=definition_cache,
                max_concurrency=config.max_concurrency,
            )
            det_labels = [
                DetectionLabel(name=name, description=desc, definition=definition)
                for (name, desc), definition in zip(labels, definitions)
            ]
            classes = _class_entries_for(dataset, image, augmented, class_definitions)
            if not classes:
                logger.warning("image %s has no candidate classes; skipping matching", image.image_id)
                continue
            report = match_labels(det_labels, classes, embedder)
            match_records.extend(report.records)
            for record, det in zip(report.records, exported):
                if record.evaluated_as is None:
                    continue
                all_detections.append(
                    EvalDetection(
                        image_id=image.image_id,
                        class_name=record.evaluated_as,
                        bbox=det["bbox"],
                        confidence=det["confidence"],
                    )
                )
        except Exception as exc:  # per-image isolation
            failed += 1
            logger.error("image %s failed: %s", image.image_id, exc)

    metrics = compute_metrics(all_detections, dataset.all_ground_truth(), sweep=sweep)
    if failed:
        metrics.flags.append(f"partial_coverage:{failed}_images_failed")
    if empty_images:
        metrics.flags.append(f"empty_description:{','.join(map(str, empty_images))}")
    mean_instances = sum(instance_counts) / len(instance_counts) if instance_counts else 0.0
    return BenchmarkResult(
        metrics=metrics,
        timings=timings,
        images_processed=len(dataset.images) - failed,
        images_failed=failed,
        mean_instances=mean_instances,
        ungrounded_total=ungrounded_total,
        match_records=match_records,
        validation_audit=validation_audit,
    )
