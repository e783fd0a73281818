from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from groundtrack.config import PipelineConfig
from groundtrack.description import AttributeSchema, AttributeSpec
from groundtrack.gateway.mocks import (
    MockChatBackend,
    MockDetectorBackend,
    MockEmbedderBackend,
    MockServices,
    MockTrackerBackend,
    MockWorld,
)
from groundtrack.gateway.pool import EndpointPool
from groundtrack.gateway.services import ModelGateway
from groundtrack.gateway.transport import MockTransport


def build_gateway(
    chat: MockChatBackend | None = None,
    detector: MockDetectorBackend | None = None,
    tracker: MockTrackerBackend | None = None,
    embedder: MockEmbedderBackend | None = None,
    faults: dict | None = None,
    chat_timeout_ms: int = 5_000,
    max_retries: int = 1,
) -> ModelGateway:
    """Gateway with in-process mock services, one endpoint per role."""
    transport = MockTransport()
    services = MockServices(
        chat=chat or MockChatBackend(),
        detector=detector or MockDetectorBackend(),
        tracker=tracker or MockTrackerBackend(),
        embedder=embedder or MockEmbedderBackend(dim=64),
    )
    services.install(transport, faults)

    def pool(url: str, timeout: int) -> EndpointPool:
        return EndpointPool.from_urls([url], timeout_ms=timeout, max_retries=max_retries)

    return ModelGateway(
        chat_pool=pool(MockServices.CHAT_URL, chat_timeout_ms),
        detector_pool=pool(MockServices.DETECTOR_URL, 2_000),
        tracker_pool=pool(MockServices.TRACKER_URL, 2_000),
        embedder_pool=pool(MockServices.EMBEDDER_URL, 2_000),
        transport=transport,
        chat_model="mock-vlm",
    )


def world_gateway(world: MockWorld, **kwargs) -> ModelGateway:
    return build_gateway(
        chat=MockChatBackend(world=world),
        detector=MockDetectorBackend(world=world),
        tracker=MockTrackerBackend(world=world),
        embedder=MockEmbedderBackend(world=world),
        **kwargs,
    )


@pytest.fixture
def basic_schema() -> AttributeSchema:
    return AttributeSchema()


@pytest.fixture
def enum_schema() -> AttributeSchema:
    return AttributeSchema(
        [
            AttributeSpec(key="material", kind="enum", allowed=("metal", "plastic", "wood")),
            AttributeSpec(key="state", kind="enum", allowed=("open", "closed")),
            AttributeSpec(key="count", kind="integer"),
            AttributeSpec(key="fragile", kind="boolean"),
        ]
    )


@pytest.fixture
def mock_config(tmp_path) -> PipelineConfig:
    config = PipelineConfig()
    config.output_dir = tmp_path / "out"
    config.output_dir.mkdir(parents=True, exist_ok=True)
    return config


FIXTURES = Path(__file__).parent / "fixtures"
