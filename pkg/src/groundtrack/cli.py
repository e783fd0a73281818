"""Operator-facing CLI composing the pipeline modules.

Every documented error maps to exactly one exit code; failures print one
machine-readable JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .config import PipelineConfig
from .description import parse_structured_description
from .errors import (
    ConfigError,
    EmptyDescription,
    GatewayError,
    GroundtrackError,
    NoValidJson,
    SchemaViolation,
)
from .evaluation.benchmark import run_benchmark
from .evaluation.datasets import load_dataset
from .grounding import ground_instances
from .images import Frame
from .overlay import render_overlay
from .pipeline import describe_image, run_update
from .trackstore import TrackRegistry

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_NO_VALID_JSON = 3
EXIT_EMPTY_DESCRIPTION = 4
EXIT_SERVICE = 5
EXIT_DATA = 6
EXIT_PORT_IN_USE = 7

EXIT_CODES = {
    NoValidJson: EXIT_NO_VALID_JSON,
    EmptyDescription: EXIT_EMPTY_DESCRIPTION,
    GatewayError: EXIT_SERVICE,
    SchemaViolation: EXIT_DATA,
    ConfigError: EXIT_DATA,
    OSError: EXIT_PORT_IN_USE,  # serve-mocks port collisions
}


def _fail(exc: Exception) -> int:
    code = EXIT_INTERNAL
    for exc_type, exit_code in EXIT_CODES.items():
        if isinstance(exc, exc_type):
            code = exit_code
            break
    print(
        json.dumps({"error": type(exc).__name__, "exit_code": code, "message": str(exc)}),
        file=sys.stderr,
    )
    return code


def _load_config(args) -> PipelineConfig:
    config = PipelineConfig.load(args.config)
    if getattr(args, "odf", None) is not None:
        config.odf = args.odf
    if getattr(args, "validate", False):
        config.validate = True
    if getattr(args, "task", None):
        config.task = args.task
    if getattr(args, "update_interval", None) is not None:
        config.update_interval = args.update_interval
    if getattr(args, "max_concurrency", None) is not None:
        config.max_concurrency = args.max_concurrency
    if getattr(args, "output_dir", None):
        config.output_dir = Path(args.output_dir)
    if getattr(args, "stable_output", False):
        config.stable_output = True
    if config.odf < 1.0:
        raise ConfigError(f"odf must be >= 1, got {config.odf}")
    config.output_dir.mkdir(parents=True, exist_ok=True)
    return config


def _write(config: PipelineConfig, name: str, text: str) -> Path:
    path = config.output_dir / name
    path.write_text(text)
    return path


def cmd_describe(args) -> int:
    config = _load_config(args)
    gateway = config.build_gateway()
    frame = Frame.open(args.image)
    desc = describe_image(frame, config, gateway)
    payload = desc.to_payload()
    if config.stable_output:
        payload["provenance"].pop("raw_hash", None)
    text = json.dumps(payload, indent=2)
    _write(config, "description.json", text)
    print(text)
    return EXIT_OK


def cmd_ground(args) -> int:
    config = _load_config(args)
    gateway = config.build_gateway()
    frame = Frame.open(args.image)
    desc_path = Path(args.description)
    if not desc_path.exists():
        raise ConfigError(f"description file not found: {desc_path}")
    raw = desc_path.read_text()
    data = json.loads(raw)
    instances_json = json.dumps(data["instances"] if isinstance(data, dict) else data)
    desc = parse_structured_description(instances_json, config.schema, word_cap=config.word_cap)
    result = ground_instances(desc, frame, gateway, odf=config.odf)
    text = result.to_json()
    _write(config, "grounding.json", text)
    if args.overlay:
        items = [
            {"bbox": a.detection.bbox, "label": f"{a.instance.object_name} r{a.rank}"}
            for a in result.assignments
        ]
        render_overlay(frame, items, config.output_dir / "grounding_overlay.png")
    print(text)
    return EXIT_OK


def _frame_files(directory: Path) -> list[Path]:
    files = sorted(
        p for p in directory.iterdir()
        if p.suffix.lower() in (".png", ".jpg", ".jpeg", ".bmp")
    )
    if not files:
        raise ConfigError(f"no image frames found in {directory}")
    return files


def cmd_track(args) -> int:
    config = _load_config(args)
    gateway = config.build_gateway()
    frames = _frame_files(Path(args.frames))
    registry = TrackRegistry(iou_gate=config.iou_gate, patience=config.patience)
    trigger = Path(config.update_trigger) if config.update_trigger else None
    lines: list[str] = []
    for index, path in enumerate(frames):
        try:
            frame = Frame.open(path)
        except OSError as exc:
            print(json.dumps({"skipped_frame": str(path), "reason": str(exc)}), file=sys.stderr)
            continue
        if index > 0:
            registry.step_frame(frame, gateway)
        interval_due = config.update_interval > 0 and index % config.update_interval == 0
        # Frame 0 always initializes, so the one-shot trigger only counts later.
        trigger_due = index > 0 and trigger is not None and trigger.exists()
        if index == 0 or interval_due or trigger_due:
            run_update(frame, registry, config, gateway)
            if trigger_due:
                trigger.unlink()
        lines.append(registry.snapshot_line())
        if args.overlay:
            items = [t.to_dict() for t in registry.exportable_tracks()]
            for item in items:
                item["label"] = item.pop("object_name") or "?"
            render_overlay(frame, items, config.output_dir / f"overlay_{index:04d}.png")
    _write(config, "snapshots.jsonl", "\n".join(lines) + "\n")
    print(lines[-1] if lines else "{}")
    return EXIT_OK


def cmd_eval(args) -> int:
    config = _load_config(args)
    gateway = config.build_gateway()
    dataset = load_dataset(args.dataset, args.format)
    result = run_benchmark(
        dataset, config, gateway,
        odf=args.odf, validation=config.validate, sweep=args.sweep,
    )
    payload = {
        "dataset": str(args.dataset),
        "format": args.format,
        "odf": config.odf,
        "validation": config.validate,
        "images_processed": result.images_processed,
        "images_failed": result.images_failed,
        "mean_instances": result.mean_instances,
        "ungrounded_total": result.ungrounded_total,
        "metrics": result.metrics.to_payload(),
    }
    _write(config, "report.json", json.dumps(payload, indent=2))
    if not config.stable_output:
        _write(config, "timing.csv", result.timings.to_csv())
    _write(
        config,
        "matches.jsonl",
        "\n".join(json.dumps(r.to_dict()) for r in result.match_records) + "\n",
    )
    if result.validation_audit:
        _write(
            config,
            "validation_audit.jsonl",
            "\n".join(json.dumps(e) for e in result.validation_audit) + "\n",
        )
    row = result.summary_row()
    headers = ["Ins.", "Time", "mAP", "Pre.", "Rec.", "F1"]
    print("  ".join(f"{h:>8}" for h in ["Model"] + headers))
    cells = [f"{gateway.chat_model:>8}"] + [f"{row[h]:>8}" for h in headers]
    print("  ".join(cells))
    if result.images_failed:
        print(f"warning: {result.images_failed} images failed", file=sys.stderr)
    total_images = result.images_processed + result.images_failed
    return EXIT_OK if result.images_processed > 0 or total_images == 0 else EXIT_SERVICE


def cmd_serve_mocks(args) -> int:
    from .gateway.server import MockServiceServer

    server = MockServiceServer(args.fixtures, args.port)
    print(json.dumps({"serving": server.base_url, "fixtures": str(args.fixtures)}), flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
    return EXIT_OK


def cmd_make_fixtures(args) -> int:
    from .synthetic import build_benchmark_world, build_error_world, build_sequence

    out = Path(args.out_dir)
    if args.kind == "benchmark":
        build_benchmark_world(out, n_images=args.images, seed=args.seed)
    elif args.kind == "errors":
        build_error_world(out, n_images=args.images, seed=args.seed)
    else:
        build_sequence(out, n_frames=args.images, seed=args.seed,
                       entrant_frame=args.entrant_frame)
    print(json.dumps({"fixtures": str(out), "kind": args.kind}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="groundtrack",
        description="Describe, ground, segment, track, and evaluate object instances "
                    "through external model services.",
    )
    parser.add_argument("--version", action="version", version=f"groundtrack {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_odf=True):
        p.add_argument("--config", required=True, help="TOML/JSON pipeline config")
        if with_odf:
            p.add_argument("--odf", type=float, default=None, help="over-detect factor (>= 1)")
        p.add_argument("--validate", action="store_true", help="enable the validation pass")
        p.add_argument("--task", default=None, help="task text for decoupled attribution")
        p.add_argument("--max-concurrency", type=int, default=None)
        p.add_argument("--output-dir", default=None)
        p.add_argument("--stable-output", action="store_true",
                       help="exclude run-dependent fields from outputs")

    p = sub.add_parser("describe", help="structured description for one image")
    p.add_argument("image")
    common(p, with_odf=False)
    p.set_defaults(fn=cmd_describe)

    p = sub.add_parser("ground", help="ground a description file against one image")
    p.add_argument("image")
    p.add_argument("description")
    common(p)
    p.add_argument("--overlay", action="store_true")
    p.set_defaults(fn=cmd_ground)

    p = sub.add_parser("track", help="track across a frame directory")
    p.add_argument("frames")
    common(p)
    p.add_argument("--update-interval", type=int, default=None,
                   help="re-run the update mechanism every k frames")
    p.add_argument("--overlay", action="store_true")
    p.set_defaults(fn=cmd_track)

    p = sub.add_parser("eval", help="benchmark a dataset")
    p.add_argument("dataset")
    common(p)
    p.add_argument("--format", choices=["coco", "custom"], default="coco")
    p.add_argument("--sweep", action="store_true", help="F1-maximizing threshold sweep")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("serve-mocks", help="host the mock services over HTTP")
    p.add_argument("fixtures")
    p.add_argument("--port", type=int, default=8181)
    p.set_defaults(fn=cmd_serve_mocks)

    p = sub.add_parser("make-fixtures", help="generate a deterministic synthetic world")
    p.add_argument("out_dir")
    p.add_argument("--kind", choices=["benchmark", "errors", "sequence"], default="benchmark")
    p.add_argument("--images", type=int, default=10, help="image or frame count")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--entrant-frame", type=int, default=None,
                   help="sequence only: frame at which an extra object appears")
    p.set_defaults(fn=cmd_make_fixtures)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except GroundtrackError as exc:
        return _fail(exc)
    except OSError as exc:
        return _fail(exc)
    except Exception as exc:  # keep the taxonomy total
        return _fail(exc)


if __name__ == "__main__":
    sys.exit(main())
