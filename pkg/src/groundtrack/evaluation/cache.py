"""Disk-backed caches for generated definitions and text embeddings.

Entries are keyed by (model id, sha256 of the input text); benchmark-scale
runs re-embed thousands of duplicate class names, so both caches write
through to a JSON file when a path is configured.
"""

from __future__ import annotations

import hashlib
import json
import threading
from pathlib import Path
from typing import Any


def _key(model_id: str, text: str) -> str:
    digest = hashlib.sha256()
    digest.update(model_id.encode("utf-8"))
    digest.update(b"\x00")
    digest.update(text.encode("utf-8"))
    return digest.hexdigest()


class DiskCache:
    """Concurrent-read/serialized-write JSON cache. path=None keeps it in memory."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        self._lock = threading.Lock()
        self._data: dict[str, Any] = {}
        if self.path and self.path.exists():
            self._data = json.loads(self.path.read_text())

    def get(self, model_id: str, text: str) -> Any | None:
        with self._lock:
            return self._data.get(_key(model_id, text))

    def put(self, model_id: str, text: str, value: Any) -> None:
        with self._lock:
            self._data[_key(model_id, text)] = value
            if self.path:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                self.path.write_text(json.dumps(self._data))

    def __len__(self) -> int:
        with self._lock:
            return len(self._data)
