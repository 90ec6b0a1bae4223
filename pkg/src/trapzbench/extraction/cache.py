"""On-disk response cache, one file per response."""

from __future__ import annotations

import hashlib
import json
import os
import threading
from pathlib import Path


def response_key(image_sha256: str, prompt: str, config, sample: int = 0) -> str:
    parts = {
        "image": image_sha256,
        "prompt": hashlib.sha256(prompt.encode("utf-8")).hexdigest(),
        "model": config.model_name,
        "temperature": config.temperature,
        "top_p": config.top_p,
        "max_output_tokens": config.max_output_tokens,
    }
    if sample:
        parts["sample"] = sample
    return hashlib.sha256(json.dumps(parts, sort_keys=True).encode()).hexdigest()


class ResponseCache:
    """Raw response text stored verbatim under ``<dir>/<key[:2]>/<key>.txt``.

    Reads are lock-free; writes are serialized and atomic.
    """

    def __init__(self, directory):
        self.directory = Path(directory)
        self._lock = threading.Lock()

    def _path(self, key: str) -> Path:
        return self.directory / key[:2] / f"{key}.txt"

    def get(self, key: str) -> str | None:
        try:
            return self._path(key).read_bytes().decode("utf-8")
        except FileNotFoundError:
            return None

    def put(self, key: str, text: str) -> None:
        path = self._path(key)
        with self._lock:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp")
            tmp.write_bytes(text.encode("utf-8"))
            os.replace(tmp, path)

    def __contains__(self, key: str) -> bool:
        return self._path(key).exists()
