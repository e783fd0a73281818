"""Structured scene descriptions: attribute schemas, prompt construction, and
robust parsing of noisy VLM responses.

The parser is deliberately forgiving: it hunts for the longest valid JSON in
the raw text, typecasts near-miss values, snaps misspelled keywords onto the
schema via edit distance, truncates over-long descriptions, and uniquifies
duplicate names, while a parse report accounts for every raw list element.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

from .errors import EmptyDescription, GatewayError, NoValidJson, SchemaError, ValueRejected
from .gateway.chat import ChatRequest, ChatResponse, ImagePart, TextPart
from .images import Frame
from .prompts import load_template, render
from .textmatch import match_keyword

logger = logging.getLogger(__name__)

DEFAULT_WORD_CAP = 10
INVALID_KEYWORD = "invalid"

KINDS = ("text", "integer", "real", "boolean", "enum")


@dataclass(frozen=True)
class AttributeSpec:
    key: str
    kind: str = "text"
    required: bool = False
    allowed: tuple[str, ...] = ()
    max_length: int | None = None
    depends_on: tuple[str, Any] | None = None

    def __post_init__(self):
        if not self.key:
            raise SchemaError("attribute key must be non-empty")
        if self.kind not in KINDS:
            raise SchemaError(f"attribute {self.key!r}: unknown kind {self.kind!r}")
        if self.kind == "enum" and not self.allowed:
            raise SchemaError(f"attribute {self.key!r}: enum needs at least one keyword")
        if self.max_length is not None and self.max_length < 1:
            raise SchemaError(f"attribute {self.key!r}: max_length must be positive")

    def describe(self) -> str:
        """One prompt line stating key, kind, and constraints."""
        bits = [self.kind]
        if self.kind == "enum":
            keywords = ", ".join(f'"{k}"' for k in self.allowed)
            bits = [f"one of {keywords}"]
        bits.append("required" if self.required else "optional")
        if self.max_length is not None:
            bits.append(f"at most {self.max_length} characters")
        if self.depends_on is not None:
            dep_key, dep_value = self.depends_on
            bits.append(f"only required when {dep_key} is {json.dumps(dep_value)}")
        return f"- {self.key} ({'; '.join(bits)})"


_NAME_SPEC = AttributeSpec(key="object_name", kind="text", required=True)
_DESC_SPEC = AttributeSpec(key="description", kind="text", required=True)


class AttributeSchema:
    """Ordered attribute specs; object_name and description are always present
    as required text attributes, injected if the caller omits them."""

    def __init__(self, specs: Sequence[AttributeSpec] = ()):
        merged: list[AttributeSpec] = []
        seen: set[str] = set()
        by_key = {s.key: s for s in specs}
        for builtin in (_NAME_SPEC, _DESC_SPEC):
            supplied = by_key.get(builtin.key)
            if supplied is not None and (supplied.kind != "text" or not supplied.required):
                raise SchemaError(f"{builtin.key} must stay a required text attribute")
            merged.append(supplied or builtin)
            seen.add(builtin.key)
        for spec in specs:
            if spec.key in ("object_name", "description"):
                continue
            if spec.key in seen:
                raise SchemaError(f"duplicate attribute key {spec.key!r}")
            seen.add(spec.key)
            merged.append(spec)
        self.specs: tuple[AttributeSpec, ...] = tuple(merged)

    def keys(self) -> list[str]:
        return [s.key for s in self.specs]

    def get(self, key: str) -> AttributeSpec | None:
        for spec in self.specs:
            if spec.key == key:
                return spec
        return None

    def user_specs(self) -> list[AttributeSpec]:
        return [s for s in self.specs if s.key not in ("object_name", "description")]

    @classmethod
    def from_file(cls, path: str | Path) -> "AttributeSchema":
        path = Path(path)
        if path.suffix == ".toml":
            try:
                import tomllib
            except ModuleNotFoundError:
                import tomli as tomllib
            data = tomllib.loads(path.read_text())
        else:
            data = json.loads(path.read_text())
        specs = []
        for entry in data.get("attributes", []):
            dep = entry.get("depends_on")
            specs.append(
                AttributeSpec(
                    key=entry["key"],
                    kind=entry.get("kind", "text"),
                    required=bool(entry.get("required", False)),
                    allowed=tuple(entry.get("allowed", ())),
                    max_length=entry.get("max_length"),
                    depends_on=(dep["key"], dep["value"]) if dep else None,
                )
            )
        return cls(specs)


@dataclass(frozen=True)
class ObjectInstance:
    object_name: str
    description: str
    attributes: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"object_name": self.object_name, "description": self.description}
        out.update(self.attributes)
        return out


@dataclass
class ElementRecord:
    index: int
    outcome: str  # kept | repaired | discarded
    reasons: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"index": self.index, "outcome": self.outcome, "reasons": self.reasons}


@dataclass
class ParseReport:
    elements: list[ElementRecord] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"elements": [e.to_dict() for e in self.elements], "notes": self.notes}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def kept_count(self) -> int:
        return sum(1 for e in self.elements if e.outcome != "discarded")


@dataclass
class Provenance:
    model_id: str = ""
    raw_hash: str = ""
    report: ParseReport = field(default_factory=ParseReport)


@dataclass
class StructuredDescription:
    instances: list[ObjectInstance]
    provenance: Provenance = field(default_factory=Provenance)

    def __len__(self) -> int:
        return len(self.instances)

    def names(self) -> list[str]:
        return [i.object_name for i in self.instances]

    def instances_json(self) -> str:
        """The instances as the JSON list a model would have produced."""
        return json.dumps([i.to_dict() for i in self.instances])

    def to_payload(self) -> dict:
        return {
            "instances": [i.to_dict() for i in self.instances],
            "provenance": {
                "model_id": self.provenance.model_id,
                "raw_hash": self.provenance.raw_hash,
                "parse_report": self.provenance.report.to_dict(),
            },
        }


# --- JSON extraction ----------------------------------------------------------

def _balanced_end(raw: str, start: int) -> int | None:
    """Index of the closer balancing raw[start], honoring JSON string rules."""
    pairs = {"{": "}", "[": "]"}
    stack: list[str] = []
    in_string = False
    escaped = False
    for i in range(start, len(raw)):
        ch = raw[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch in pairs:
            stack.append(pairs[ch])
        elif ch in ("}", "]"):
            if not stack or ch != stack[-1]:
                return None
            stack.pop()
            if not stack:
                return i
    return None


def extract_json(raw: str) -> Any:
    """Parse of the longest valid JSON object or list embedded in raw text.

    Scans every balanced {...} / [...] substring, tolerating prose, Markdown
    fences, and other artifacts around the JSON body. "Longest" means the
    longest compact serialization among all candidates that parse.
    """
    if not raw:
        raise NoValidJson("empty response")
    best: Any = None
    best_len = -1
    for i, ch in enumerate(raw):
        if ch not in "{[":
            continue
        end = _balanced_end(raw, i)
        if end is None:
            continue
        candidate = raw[i : end + 1]
        try:
            value = json.loads(candidate)
        except json.JSONDecodeError:
            continue
        serialized = len(json.dumps(value, separators=(",", ":")))
        if serialized > best_len:
            best = value
            best_len = serialized
    if best_len < 0:
        raise NoValidJson("no balanced substring parses as JSON")
    return best


# --- value coercion -----------------------------------------------------------

def coerce_value(value: Any, spec: AttributeSpec) -> tuple[Any, str | None]:
    """Coerce a raw JSON scalar to the spec's kind.

    Returns (coerced value, repair note or None); raises ValueRejected when
    the value cannot be salvaged.
    """
    if isinstance(value, (dict, list)):
        raise ValueRejected(spec.key, value, "expected a scalar, got a nested structure")
    if value is None:
        raise ValueRejected(spec.key, value, "null value")

    if spec.kind == "integer":
        if isinstance(value, bool):
            raise ValueRejected(spec.key, value, "boolean where integer expected")
        if isinstance(value, int):
            return value, None
        if isinstance(value, float) and value.is_integer():
            return int(value), f"typecast {value!r} to integer"
        if isinstance(value, str):
            try:
                return int(value.strip()), f"typecast {value!r} to integer"
            except ValueError:
                raise ValueRejected(spec.key, value, "not an integer") from None
        raise ValueRejected(spec.key, value, "not an integer")

    if spec.kind == "real":
        if isinstance(value, bool):
            raise ValueRejected(spec.key, value, "boolean where number expected")
        if isinstance(value, (int, float)):
            return float(value), None
        if isinstance(value, str):
            try:
                return float(value.strip()), f"typecast {value!r} to real"
            except ValueError:
                raise ValueRejected(spec.key, value, "not a number") from None
        raise ValueRejected(spec.key, value, "not a number")

    if spec.kind == "boolean":
        if isinstance(value, bool):
            return value, None
        if isinstance(value, int) and value in (0, 1):
            return bool(value), f"typecast {value!r} to boolean"
        if isinstance(value, str):
            lowered = value.strip().lower()
            if lowered in ("true", "false"):
                return lowered == "true", f"typecast {value!r} to boolean"
        raise ValueRejected(spec.key, value, "not a boolean")

    if spec.kind == "enum":
        text = value if isinstance(value, str) else str(value)
        matched = match_keyword(text, spec.allowed)
        if matched is None:
            raise ValueRejected(
                spec.key, value, f"no keyword within edit distance of {list(spec.allowed)}"
            )
        if matched == text:
            return matched, None
        return matched, f"matched {text!r} to keyword {matched!r}"

    # text
    if isinstance(value, str):
        text, note = value, None
    elif isinstance(value, bool):
        text, note = ("true" if value else "false"), f"typecast {value!r} to text"
    else:
        text, note = str(value), f"typecast {value!r} to text"
    if spec.max_length is not None and len(text) > spec.max_length:
        raise ValueRejected(spec.key, value, f"exceeds max length {spec.max_length}")
    return text, note


def _truncate_words(text: str, cap: int) -> tuple[str, bool]:
    words = text.split()
    if len(words) <= cap:
        return text, False
    return " ".join(words[:cap]), True


def _unique_name(base: str, used: set[str]) -> str:
    if base not in used:
        return base
    n = 2
    while f"{base}_{n}" in used:
        n += 1
    return f"{base}_{n}"


# --- prompt construction --------------------------------------------------------

def build_description_prompt(
    schema: AttributeSchema,
    word_cap: int = DEFAULT_WORD_CAP,
    template: str | None = None,
) -> str:
    """Deterministic description prompt enumerating every schema attribute."""
    lines = [spec.describe() for spec in schema.specs]
    text = template if template is not None else load_template("describe")
    return render(text, {"word_cap": str(word_cap), "attributes": "\n".join(lines)})


# --- parsing --------------------------------------------------------------------

def parse_structured_description(
    raw: str,
    schema: AttributeSchema,
    word_cap: int = DEFAULT_WORD_CAP,
    model_id: str = "",
) -> StructuredDescription:
    """Parse a raw VLM response into a validated StructuredDescription.

    Raises NoValidJson when the text holds no JSON at all and EmptyDescription
    when parsing worked but no element survived filtering; the two are
    distinct failure modes for callers.
    """
    value = extract_json(raw)
    report = ParseReport()
    if isinstance(value, dict):
        value = [value]
        report.notes.append("wrapped a single top-level object into a list")

    kept: list[tuple[ElementRecord, ObjectInstance]] = []
    used_names: set[str] = set()
    for index, element in enumerate(value):
        record = ElementRecord(index=index, outcome="kept")
        report.elements.append(record)
        if not isinstance(element, dict):
            record.outcome = "discarded"
            record.reasons.append("not an object")
            continue

        coerced: dict[str, Any] = {}
        rejected: dict[str, str] = {}
        for spec in schema.specs:
            if spec.key not in element:
                continue
            try:
                val, note = coerce_value(element[spec.key], spec)
            except ValueRejected as exc:
                rejected[spec.key] = exc.reason
                record.reasons.append(f"dropped {spec.key!r}: {exc.reason}")
                continue
            coerced[spec.key] = val
            if note:
                record.reasons.append(f"{spec.key}: {note}")

        for key in element:
            if schema.get(key) is None:
                record.reasons.append(f"dropped unknown attribute {key!r}")

        for spec in schema.specs:
            if (
                spec.required
                and spec.kind == "text"
                and spec.key in coerced
                and not coerced[spec.key].strip()
            ):
                del coerced[spec.key]
                rejected[spec.key] = "empty text"
                record.reasons.append(f"dropped {spec.key!r}: empty text")

        missing = None
        for spec in schema.specs:
            applicable = spec.depends_on is None or (
                coerced.get(spec.depends_on[0]) == spec.depends_on[1]
            )
            if spec.required and applicable and spec.key not in coerced:
                missing = spec.key
                break
        if missing is not None:
            record.outcome = "discarded"
            reason = "missing required attribute" if missing not in rejected else "invalid required attribute"
            record.reasons.append(f"{reason} {missing!r}")
            continue

        description, truncated = _truncate_words(coerced["description"], word_cap)
        if truncated:
            record.reasons.append(f"description truncated to {word_cap} words")

        name = _unique_name(coerced["object_name"], used_names)
        if name != coerced["object_name"]:
            record.reasons.append(f"renamed duplicate {coerced['object_name']!r} to {name!r}")
        used_names.add(name)

        if record.reasons:
            record.outcome = "repaired"
        extras = {
            k: v for k, v in coerced.items() if k not in ("object_name", "description")
        }
        kept.append((record, ObjectInstance(name, description, extras)))

    if not kept:
        raise EmptyDescription("no element survived filtering", report=report)

    instances = [inst for _, inst in kept]
    by_description: dict[str, list[str]] = {}
    for inst in instances:
        by_description.setdefault(inst.description, []).append(inst.object_name)
    for text, names in by_description.items():
        if len(names) > 1:
            # Descriptions should be unique; record the collision, keep both.
            report.notes.append(f"duplicate description shared by {names}: {text!r}")
    provenance = Provenance(
        model_id=model_id,
        raw_hash=hashlib.sha256(raw.encode("utf-8")).hexdigest(),
        report=report,
    )
    logger.debug("parse report: %s", report.to_json())
    return StructuredDescription(instances=instances, provenance=provenance)


# --- decoupled attribution -------------------------------------------------------

def build_attribution_prompt(desc: StructuredDescription, task: str,
                             template: str | None = None) -> str:
    text = template if template is not None else load_template("attribute")
    return render(text, {"description_json": desc.instances_json(), "task": task})


def apply_attribution(
    desc: StructuredDescription, key: str, response_text: str
) -> StructuredDescription:
    """Merge one attribution response into the description.

    Sets `key` true on referenced instances and false elsewhere; a response
    with no parsable JSON leaves the attribute unset and flags the failure.
    """
    names = desc.names()
    notes = desc.provenance.report.notes
    try:
        refs = extract_json(response_text)
    except NoValidJson:
        notes.append(f"attribution {key!r} failed: no valid JSON in response")
        logger.warning("attribution %r: no valid JSON; attribute left unset", key)
        return desc
    if not isinstance(refs, list):
        refs = [refs]
    matched: set[str] = set()
    for ref in refs:
        if not isinstance(ref, str):
            notes.append(f"attribution {key!r}: dropped non-string reference {ref!r}")
            continue
        if ref in names:
            matched.add(ref)
            continue
        snapped = match_keyword(ref, names)
        if snapped is not None:
            matched.add(snapped)
        else:
            notes.append(f"attribution {key!r}: dropped unmatched reference {ref!r}")
            logger.info("attribution %r: unmatched reference %r dropped", key, ref)
    instances = [
        replace(inst, attributes={**inst.attributes, key: inst.object_name in matched})
        for inst in desc.instances
    ]
    return StructuredDescription(instances=instances, provenance=desc.provenance)


def decoupled_attribution(
    desc: StructuredDescription,
    task: str,
    key: str,
    gateway,
    frame: Frame,
    template: str | None = None,
) -> StructuredDescription:
    """Generate one boolean attribute in a follow-up VLM call.

    Attribution augments rather than gates: service failures leave the
    attribute unset on every instance and the pipeline continues.
    """
    if not desc.instances:
        raise ValueError("description must be non-empty")
    if not task:
        raise ValueError("task must be non-empty")
    prompt = build_attribution_prompt(desc, task, template=template)
    request = ChatRequest.build(
        user_parts=[TextPart(prompt), ImagePart(frame.png_bytes())],
        model=gateway.chat_model,
    )
    try:
        response: ChatResponse = gateway.chat(request)
    except GatewayError as exc:
        desc.provenance.report.notes.append(f"attribution {key!r} failed: {exc}")
        logger.warning("attribution %r failed: %s", key, exc)
        return desc
    return apply_attribution(desc, key, response.text)


def attribute_many(
    desc: StructuredDescription,
    jobs: Sequence[tuple[str, str]],
    gateway,
    frame: Frame,
    max_concurrency: int = 8,
    template: str | None = None,
) -> StructuredDescription:
    """Run several (key, task) attributions concurrently, merging serially.

    One request per job goes through the fan-out path; responses are folded
    into the description in job order, so the result is deterministic
    regardless of completion order.
    """
    if not desc.instances:
        raise ValueError("description must be non-empty")
    if not jobs:
        return desc
    requests = [
        ChatRequest.build(
            user_parts=[
                TextPart(build_attribution_prompt(desc, task, template=template)),
                ImagePart(frame.png_bytes()),
            ],
            model=gateway.chat_model,
        )
        for _key, task in jobs
    ]
    results = gateway.chat_fan_out(requests, max_concurrency=max_concurrency)
    merged = desc
    for (key, _task), result in zip(jobs, results):
        if isinstance(result, GatewayError):
            merged.provenance.report.notes.append(f"attribution {key!r} failed: {result}")
            logger.warning("attribution %r failed: %s", key, result)
            continue
        merged = apply_attribution(merged, key, result.text)
    return merged
