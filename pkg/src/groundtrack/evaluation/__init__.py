"""Benchmark protocol: definition generation, embedding-based label matching
with augmented classes and mapping rules, dataset ingestion, and detection
metrics with F1-maximizing threshold sweeps.
"""

from .benchmark import BenchmarkResult, run_benchmark
from .cache import DiskCache
from .datasets import COCO, CUSTOM, Dataset, DatasetImage, load_dataset
from .labels import (
    ClassEntry,
    DetectionLabel,
    MatchRecord,
    MatchReport,
    TextEmbedder,
    generate_definitions,
    load_augmented_classes,
    match_labels,
)
from .metrics import (
    EvalDetection,
    GroundTruth,
    MetricsReport,
    average_precision,
    compute_metrics,
)

__all__ = [
    "BenchmarkResult",
    "COCO",
    "CUSTOM",
    "ClassEntry",
    "Dataset",
    "DatasetImage",
    "DetectionLabel",
    "DiskCache",
    "EvalDetection",
    "GroundTruth",
    "MatchRecord",
    "MatchReport",
    "MetricsReport",
    "TextEmbedder",
    "average_precision",
    "compute_metrics",
    "generate_definitions",
    "load_augmented_classes",
    "load_dataset",
    "match_labels",
    "run_benchmark",
]
