"""Exception taxonomy shared across the engine.

Every error that a CLI command can surface maps to exactly one exit code
(see cli.EXIT_CODES), so new exception types must be registered there.
"""

from __future__ import annotations

from typing import Any


class GroundtrackError(Exception):
    """Base class for all engine errors."""


# --- gateway -----------------------------------------------------------------

class GatewayError(GroundtrackError):
    """Base class for model-service failures."""


class NoHealthyEndpoint(GatewayError):
    pass


class AllEndpointsFailed(GatewayError):
    """Every attempt of a request exhausted. Carries per-attempt diagnostics."""

    def __init__(self, message: str, attempts: list[dict[str, Any]]):
        super().__init__(message)
        self.attempts = attempts


class MalformedResponse(GatewayError):
    """Service returned a body that cannot be decoded into the expected shape."""

    def __init__(self, message: str, attempts: list[dict[str, Any]] | None = None):
        super().__init__(message)
        self.attempts = attempts or []


class ServiceUnavailable(GatewayError):
    pass


class ProtocolViolation(GatewayError):
    """Service answered with missing fields or out-of-range values."""


class StaleHandle(GatewayError):
    """Tracker state handle is unknown to the service."""


class DimensionMismatch(GatewayError):
    """Embedding vectors within one batch disagree on dimensionality."""


class TransportTimeout(GatewayError):
    pass


# --- description / parsing ---------------------------------------------------

class DescriptionError(GroundtrackError):
    pass


class NoValidJson(DescriptionError):
    """No balanced-bracket substring of the raw text parses as JSON."""


class EmptyDescription(DescriptionError):
    """Parsing succeeded but zero instances survived filtering."""

    def __init__(self, message: str, report: Any = None):
        super().__init__(message)
        self.report = report


class ValueRejected(DescriptionError):
    """An attribute value failed coercion against its spec."""

    def __init__(self, key: str, value: Any, reason: str):
        super().__init__(f"{key}={value!r}: {reason}")
        self.key = key
        self.value = value
        self.reason = reason


class SchemaError(DescriptionError):
    """Attribute schema violates its own invariants."""


# --- geometry / tracking -----------------------------------------------------

class EmptyMask(GroundtrackError):
    pass


class TrackerFailure(GroundtrackError):
    pass


# --- validation --------------------------------------------------------------

class DegenerateCrop(GroundtrackError):
    """Crop box has zero area after clamping to image bounds."""


class InconsistentInput(GroundtrackError):
    """Proposal set does not cover exactly the tracks in the original mapping."""


# --- evaluation --------------------------------------------------------------

class SchemaViolation(GroundtrackError):
    """Dataset file violates its format. Carries file/record context."""

    def __init__(self, message: str, path: str | None = None, context: str | None = None):
        detail = message
        if path:
            detail = f"{path}: {detail}"
        if context:
            detail = f"{detail} ({context})"
        super().__init__(detail)
        self.path = path
        self.context = context


class EmbeddingFailure(GroundtrackError):
    """Label matching cannot proceed without embeddings."""


class EmptyGroundTruth(GroundtrackError):
    pass


# --- config / cli ------------------------------------------------------------

class ConfigError(GroundtrackError):
    pass
