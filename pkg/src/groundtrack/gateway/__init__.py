"""Uniform clients for external model services: chat VLM, open-vocabulary
detector, segmenter/tracker, and text embedder, plus load balancing,
bounded-concurrency fan-out, and deterministic mock backends.
"""

from .chat import ChatRequest, ChatResponse, ImagePart, Message, TextPart, chat_complete, fan_out
from .mocks import (
    MockChatBackend,
    MockDetectorBackend,
    MockEmbedderBackend,
    MockServices,
    MockTrackerBackend,
    MockWorld,
)
from .pool import EndpointPool, Health
from .services import Detection, EmbeddingClient, ModelGateway, TrackerSnapshot, detect, tracker_update
from .transport import DispatchTransport, FaultScript, HttpTransport, MockTransport

__all__ = [
    "ChatRequest",
    "ChatResponse",
    "Detection",
    "DispatchTransport",
    "EmbeddingClient",
    "EndpointPool",
    "FaultScript",
    "Health",
    "HttpTransport",
    "ImagePart",
    "Message",
    "MockChatBackend",
    "MockDetectorBackend",
    "MockEmbedderBackend",
    "MockServices",
    "MockTrackerBackend",
    "MockTransport",
    "MockWorld",
    "ModelGateway",
    "TextPart",
    "TrackerSnapshot",
    "chat_complete",
    "detect",
    "fan_out",
    "tracker_update",
]
