"""HTTP hosting for the mock services: all four roles on one port, speaking
the same wire protocols as real deployments, with scripted latency and
failure injection for networking tests.
"""

from __future__ import annotations

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from ..errors import ServiceUnavailable
from .mocks import MockServices, MockWorld
from .transport import FaultScript

_SERVICE_BY_PATH = {
    "/v1/chat/completions": "chat",
    "/detect": "detector",
    "/track/init": "tracker",
    "/track/step": "tracker",
    "/embed": "embedder",
}


def load_faults(fixture_dir: str | Path) -> dict[str, FaultScript]:
    path = Path(fixture_dir) / "world.json"
    data = json.loads(path.read_text())
    faults = {}
    for role, spec in data.get("faults", {}).items():
        faults[role] = FaultScript(
            latency_ms=spec.get("latency_ms", 0.0),
            fail_first=spec.get("fail_first", 0),
            fail_always=spec.get("fail_always", False),
            mode=spec.get("mode", "error"),
            dead=spec.get("dead", False),
        )
    return faults


class MockServiceServer:
    def __init__(self, fixture_dir: str | Path, port: int, host: str = "127.0.0.1"):
        world = MockWorld.load(fixture_dir)
        services = MockServices.for_world(world)
        faults = load_faults(fixture_dir)
        backends = {
            "chat": services.chat,
            "detector": services.detector,
            "tracker": services.tracker,
            "embedder": services.embedder,
        }

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, fmt, *args):  # quiet by default
                pass

            def _reply(self, status: int, body: dict):
                data = json.dumps(body).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def do_GET(self):
                if self.path == "/health":
                    self._reply(200, {"status": "ready"})
                else:
                    self._reply(404, {"error": {"code": "not_found", "message": self.path}})

            def do_POST(self):
                role = _SERVICE_BY_PATH.get(self.path)
                if role is None:
                    self._reply(404, {"error": {"code": "not_found", "message": self.path}})
                    return
                length = int(self.headers.get("Content-Length", "0"))
                try:
                    payload = json.loads(self.rfile.read(length) or b"{}")
                except json.JSONDecodeError:
                    self._reply(400, {"error": {"code": "bad_json", "message": "unparseable body"}})
                    return
                script = faults.get(role)
                if script is not None:
                    outcome = script.next_outcome()
                    if script.latency_ms > 0:
                        time.sleep(script.latency_ms / 1000.0)
                    if outcome != "ok":
                        self._reply(503, {"error": {"code": "scripted_fault", "message": outcome}})
                        return
                try:
                    body = backends[role](self.path, payload)
                except ServiceUnavailable as exc:
                    self._reply(503, {"error": {"code": "unavailable", "message": str(exc)}})
                    return
                self._reply(200, body)

        # Raises OSError(EADDRINUSE) when the port is taken; callers surface it.
        self._server = ThreadingHTTPServer((host, port), Handler)
        self.host = host
        self.port = self._server.server_address[1]
        self._thread: threading.Thread | None = None

    @property
    def base_url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def start_background(self) -> None:
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def serve_forever(self) -> None:
        self._server.serve_forever()

    def shutdown(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread:
            self._thread.join(timeout=5)
