"""Pipeline configuration: one TOML or JSON file declaring endpoint pools,
model identifiers, timeouts, and pipeline knobs. API keys come from
environment variables only, never from the file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .description import AttributeSchema
from .errors import ConfigError
from .gateway.mocks import MockServices, MockWorld
from .gateway.pool import EndpointPool
from .gateway.services import ModelGateway
from .gateway.transport import DispatchTransport

CHAT_TIMEOUT_MS = 120_000
SERVICE_TIMEOUT_MS = 10_000


@dataclass
class ServiceConfig:
    endpoints: list = field(default_factory=list)  # urls or [url, weight] pairs
    timeout_ms: int = SERVICE_TIMEOUT_MS
    max_retries: int = 1
    model: str = ""
    api_key_env: str = ""

    def build_pool(self) -> EndpointPool:
        urls = [tuple(e) if isinstance(e, (list, tuple)) else e for e in self.endpoints]
        return EndpointPool.from_urls(urls, timeout_ms=self.timeout_ms, max_retries=self.max_retries)


_MOCK_DEFAULTS = {
    "chat": MockServices.CHAT_URL,
    "detector": MockServices.DETECTOR_URL,
    "tracker": MockServices.TRACKER_URL,
    "embedder": MockServices.EMBEDDER_URL,
}


@dataclass
class PipelineConfig:
    chat: ServiceConfig = field(default_factory=lambda: ServiceConfig(timeout_ms=CHAT_TIMEOUT_MS))
    detector: ServiceConfig = field(default_factory=ServiceConfig)
    tracker: ServiceConfig = field(default_factory=ServiceConfig)
    embedder: ServiceConfig = field(default_factory=ServiceConfig)

    schema: AttributeSchema = field(default_factory=AttributeSchema)
    templates: dict[str, str] = field(default_factory=dict)  # name -> override path

    odf: float = 1.0
    validate: bool = False
    task: str = ""
    word_cap: int = 10
    iou_gate: float = 0.6
    patience: int = 5
    crop_margin: float = 0.10
    max_concurrency: int = 8
    update_interval: int = 0
    update_trigger: str = ""  # path watched between frames for one-shot updates
    output_dir: Path = Path("out")
    stable_output: bool = False

    mock_fixture: str = ""
    augmented_classes: str = ""
    definition_cache: str = ""
    embedding_cache: str = ""

    config_dir: Path = Path(".")

    def __post_init__(self):
        if self.odf < 1.0:
            raise ConfigError(f"odf must be >= 1, got {self.odf}")
        if not 0.0 < self.iou_gate < 1.0:
            raise ConfigError(f"iou_gate must be in (0, 1), got {self.iou_gate}")
        if self.word_cap < 1:
            raise ConfigError("word_cap must be positive")
        if self.max_concurrency < 1:
            raise ConfigError("max_concurrency must be positive")

    def resolve(self, path_text: str) -> Path:
        path = Path(path_text)
        return path if path.is_absolute() else self.config_dir / path

    def template_text(self, name: str) -> str | None:
        """Override template content for `name`, or None for the packaged one."""
        if name in self.templates:
            return self.resolve(self.templates[name]).read_text()
        return None

    def build_gateway(self) -> ModelGateway:
        transport = DispatchTransport(api_key_env=self.chat.api_key_env or None)
        if self._uses_mocks():
            if not self.mock_fixture:
                raise ConfigError("mock:// endpoints configured but no mock_fixture set")
            world = MockWorld.load(self.resolve(self.mock_fixture))
            MockServices.for_world(world).install(transport.mock)
        return ModelGateway(
            chat_pool=self.chat.build_pool(),
            detector_pool=self.detector.build_pool(),
            tracker_pool=self.tracker.build_pool(),
            embedder_pool=self.embedder.build_pool(),
            transport=transport,
            chat_model=self.chat.model or "default-vlm",
        )

    def _uses_mocks(self) -> bool:
        for service in (self.chat, self.detector, self.tracker, self.embedder):
            for entry in service.endpoints:
                url = entry[0] if isinstance(entry, (list, tuple)) else entry
                if str(url).startswith("mock://"):
                    return True
        return False

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        if path.suffix == ".toml":
            try:
                import tomllib
            except ModuleNotFoundError:
                import tomli as tomllib
            data = tomllib.loads(path.read_text())
        else:
            try:
                data = json.loads(path.read_text())
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        return cls.from_dict(data, config_dir=path.parent)

    @classmethod
    def from_dict(cls, data: dict, config_dir: Path = Path(".")) -> "PipelineConfig":
        services = data.get("services", {})

        def service(role: str, default_timeout: int) -> ServiceConfig:
            spec = services.get(role, {})
            endpoints = spec.get("endpoints", [_MOCK_DEFAULTS[role]])
            return ServiceConfig(
                endpoints=endpoints,
                timeout_ms=spec.get("timeout_ms", default_timeout),
                max_retries=spec.get("max_retries", 1),
                model=spec.get("model", data.get("models", {}).get(role, "")),
                api_key_env=spec.get("api_key_env", ""),
            )

        pipeline = data.get("pipeline", {})
        schema = AttributeSchema()
        schema_path = pipeline.get("attribute_schema", "")
        if schema_path:
            resolved = Path(schema_path)
            if not resolved.is_absolute():
                resolved = config_dir / resolved
            if not resolved.exists():
                raise ConfigError(f"attribute schema not found: {resolved}")
            schema = AttributeSchema.from_file(resolved)

        templates = data.get("templates", {})
        for name, rel in templates.items():
            resolved = Path(rel)
            if not resolved.is_absolute():
                resolved = config_dir / resolved
            if not resolved.exists():
                raise ConfigError(f"template {name!r} not found: {resolved}")

        evaluation = data.get("evaluation", {})
        mocks = data.get("mocks", {})
        config = cls(
            chat=service("chat", CHAT_TIMEOUT_MS),
            detector=service("detector", SERVICE_TIMEOUT_MS),
            tracker=service("tracker", SERVICE_TIMEOUT_MS),
            embedder=service("embedder", SERVICE_TIMEOUT_MS),
            schema=schema,
            templates=dict(templates),
            odf=float(pipeline.get("odf", 1.0)),
            validate=bool(pipeline.get("validate", False)),
            task=pipeline.get("task", ""),
            word_cap=int(pipeline.get("word_cap", 10)),
            iou_gate=float(pipeline.get("iou_gate", 0.6)),
            patience=int(pipeline.get("patience", 5)),
            crop_margin=float(pipeline.get("crop_margin", 0.10)),
            max_concurrency=int(pipeline.get("max_concurrency", 8)),
            update_interval=int(pipeline.get("update_interval", 0)),
            update_trigger=pipeline.get("update_trigger", ""),
            output_dir=Path(pipeline.get("output_dir", "out")),
            stable_output=bool(pipeline.get("stable_output", False)),
            mock_fixture=mocks.get("fixture", ""),
            augmented_classes=evaluation.get("augmented_classes", ""),
            definition_cache=evaluation.get("definition_cache", ""),
            embedding_cache=evaluation.get("embedding_cache", ""),
            config_dir=config_dir,
        )
        if config.mock_fixture and not config.resolve(config.mock_fixture).exists():
            raise ConfigError(f"mock fixture not found: {config.resolve(config.mock_fixture)}")
        if config.augmented_classes and not config.resolve(config.augmented_classes).exists():
            raise ConfigError(
                f"augmented classes file not found: {config.resolve(config.augmented_classes)}"
            )
        return config
