import json

import pytest

from groundtrack.errors import EmbeddingFailure
from groundtrack.evaluation.cache import DiskCache
from groundtrack.evaluation.labels import (
    ClassEntry,
    DetectionLabel,
    TextEmbedder,
    generate_definitions,
    load_augmented_classes,
    match_labels,
)
from groundtrack.gateway.mocks import MockChatBackend, MockEmbedderBackend, definition_text
from groundtrack.gateway.transport import FaultScript

from conftest import build_gateway


def test_class_entry_invariants():
    with pytest.raises(ValueError):
        ClassEntry(name="cup", origin="native", rule_target="bottle")
    ClassEntry(name="mug", origin="augmented", rule_target="cup")  # fine


# --- definitions --------------------------------------------------------------------

def test_definition_passthrough_and_cache():
    gateway = build_gateway(chat=MockChatBackend())
    cache = DiskCache()
    first = generate_definitions([("bottle", None)], gateway, cache=cache)
    assert first == [definition_text("bottle")]
    # Second run with a dead chat service still answers from the cache.
    dead = build_gateway(faults={"chat": FaultScript(fail_always=True, dead=True)})
    second = generate_definitions([("bottle", None)], dead, cache=cache)
    assert second == first


def test_definition_single_upstream_call_for_duplicates():
    calls = []
    inner = MockChatBackend()

    def counting(path, payload):
        calls.append(path)
        return inner(path, payload)

    gateway = build_gateway(chat=counting)
    result = generate_definitions([("cup", None), ("cup", None)], gateway)
    assert len(calls) == 1
    assert result[0] == result[1]


def test_definition_failure_falls_back_to_none():
    chat = MockChatBackend(rules=[{"contains": '"b"', "fail": "error"}])
    gateway = build_gateway(chat=chat, max_retries=0)
    result = generate_definitions([("a", None), ("b", None), ("c", None)], gateway)
    assert result[0] is not None and result[2] is not None
    assert result[1] is None


def test_definition_includes_description_context():
    seen = []
    inner = MockChatBackend()

    def spy(path, payload):
        seen.append(payload["messages"][-1]["content"][0]["text"])
        return inner(path, payload)

    gateway = build_gateway(chat=spy)
    generate_definitions([("cup", "white ceramic cup")], gateway)
    assert "white ceramic cup" in seen[0]


def test_definition_disk_cache_persists(tmp_path):
    path = tmp_path / "defs.json"
    gateway = build_gateway()
    generate_definitions([("cup", None)], gateway, cache=DiskCache(path))
    reloaded = DiskCache(path)
    assert len(reloaded) == 1


# --- matching -----------------------------------------------------------------------

def codebook_embedder(texts):
    return MockEmbedderBackend(codebook={t: i for i, t in enumerate(texts)})


def test_match_score_one_sixth_pattern():
    # Detection shares only its name text with the class; with one-hot
    # embeddings the 6-pair mean is exactly 1/6.
    texts = ["cat", "a cat sitting", "def-cat-d", "def-cat-c", "dog", "def-dog"]
    gateway = build_gateway(embedder=codebook_embedder(texts))
    embedder = TextEmbedder(gateway)
    detections = [DetectionLabel(name="cat", description="a cat sitting", definition="def-cat-d")]
    classes = [
        ClassEntry(name="cat", definition="def-cat-c"),
        ClassEntry(name="dog", definition="def-dog"),
    ]
    report = match_labels(detections, classes, embedder)
    record = report.records[0]
    assert record.matched_class == "cat"
    assert record.score == pytest.approx(1 / 6, abs=1e-12)
    assert record.evaluated_as == "cat"


def test_match_augmented_with_rule_redirects():
    texts = ["soap dispenser", "pump bottle thing", "def-sd", "bottle", "def-bottle"]
    gateway = build_gateway(embedder=codebook_embedder(texts))
    embedder = TextEmbedder(gateway)
    detections = [
        DetectionLabel(name="soap dispenser", description="pump bottle thing", definition="def-sd")
    ]
    classes = [
        ClassEntry(name="bottle", definition="def-bottle"),
        ClassEntry(name="soap dispenser", definition="def-sd", origin="augmented",
                   rule_target="bottle"),
    ]
    report = match_labels(detections, classes, embedder)
    record = report.records[0]
    assert record.matched_class == "soap dispenser"
    assert record.evaluated_as == "bottle"


def test_match_augmented_without_rule_discards():
    texts = ["ceiling fan", "spinning blades", "def-cf", "cup"]
    gateway = build_gateway(embedder=codebook_embedder(texts))
    embedder = TextEmbedder(gateway)
    detections = [DetectionLabel(name="ceiling fan", description="spinning blades",
                                 definition="def-cf")]
    classes = [
        ClassEntry(name="cup"),
        ClassEntry(name="ceiling fan", definition="def-cf", origin="augmented"),
    ]
    report = match_labels(detections, classes, embedder)
    assert report.records[0].outcome == "discarded"
    assert report.records[0].evaluated_as is None
    assert report.evaluated() == []


def test_match_tie_breaks_by_declaration_order():
    gateway = build_gateway(embedder=MockEmbedderBackend(codebook={"x": 0}, dim=8))
    embedder = TextEmbedder(gateway)
    detections = [DetectionLabel(name="x", description="x")]
    classes = [ClassEntry(name="first"), ClassEntry(name="second")]
    report = match_labels(detections, classes, embedder)
    assert report.records[0].matched_class == "first"  # both score 0, earlier wins


def test_match_aborts_on_embedding_failure():
    gateway = build_gateway(faults={"embedder": FaultScript(fail_always=True, dead=True)})
    embedder = TextEmbedder(gateway)
    with pytest.raises(EmbeddingFailure):
        match_labels(
            [DetectionLabel(name="a", description="b")],
            [ClassEntry(name="c")],
            embedder,
        )


def test_match_reorder_invariance_except_ties():
    texts = ["cup", "white cup", "def1", "pen", "def2"]
    gateway = build_gateway(embedder=codebook_embedder(texts))
    embedder = TextEmbedder(gateway)
    detections = [DetectionLabel(name="cup", description="white cup", definition="def1")]
    classes = [ClassEntry(name="pen", definition="def2"), ClassEntry(name="cup")]
    report_a = match_labels(detections, classes, embedder)
    report_b = match_labels(detections, list(reversed(classes)), embedder)
    assert report_a.records[0].matched_class == report_b.records[0].matched_class == "cup"


# --- augmented-class file --------------------------------------------------------------

def test_shipped_augmented_classes_file():
    from importlib import resources

    path = resources.files("groundtrack").joinpath("data/coco_augmented_classes.json")
    entries = load_augmented_classes(str(path))
    assert len(entries) == 271
    rules = [e for e in entries if e.rule_target]
    assert len(rules) == 11
    assert all(e.origin == "augmented" for e in entries)
    names = [e.name for e in entries]
    assert len(set(names)) == 271
    by_name = {e.name: e for e in entries}
    assert by_name["soap dispenser"].rule_target == "bottle"


def test_augmented_classes_schema_violation(tmp_path):
    from groundtrack.errors import SchemaViolation

    bad = tmp_path / "aug.json"
    bad.write_text(json.dumps([{"definition": "missing name"}]))
    with pytest.raises(SchemaViolation):
        load_augmented_classes(bad)
