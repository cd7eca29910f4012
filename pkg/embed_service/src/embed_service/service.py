"""Wire-protocol request handling, independent of the HTTP transport.

Routes:

    GET  /v1/info          -> {embedding_dim, sample_rate, model_id}
    POST /v1/embed/text    -> {embeddings: [[...], ...]}  from {texts: [...]}
    POST /v1/embed/audio   -> {embedding: [...]}          from
                              {audio_b64: <base64 float-32 LE mono>,
                               sample_rate: <int>}

Until a model is attached every route answers 503. Returned vectors are
exactly what the model produces; the service never re-normalizes them
(clients compute cosine similarity themselves). Audio longer than the
model's receptive window is center-cropped; audio longer than the
configured cap is rejected with 400.
"""

from __future__ import annotations

import base64
import binascii
import threading
from dataclasses import dataclass

import numpy as np

from .model import DEFAULT_MODEL_ID


@dataclass(frozen=True)
class ServiceConfig:
    model_id: str = DEFAULT_MODEL_ID
    host: str = "127.0.0.1"
    port: int = 8765
    device: str = "cpu"  # "cpu" | "gpu"
    max_audio_seconds: float = 30.0
    prefer_pretrained: bool = True
    fallback_seed: int = 0

    def __post_init__(self):
        if self.device not in ("cpu", "gpu"):
            raise ValueError(f"device must be 'cpu' or 'gpu', got {self.device!r}")
        if not 0 <= self.port <= 65535:
            raise ValueError(f"port {self.port} out of range")
        if not self.max_audio_seconds > 0:
            raise ValueError("max_audio_seconds must be positive")
        if not self.model_id:
            raise ValueError("model_id must be non-empty")


class EmbedApp:
    """Routes requests to one embedder behind a single inference lock.

    The lock serializes model calls; the HTTP layer on top may accept
    connections concurrently.
    """

    def __init__(self, max_audio_seconds: float = 30.0):
        if not max_audio_seconds > 0:
            raise ValueError("max_audio_seconds must be positive")
        self.max_audio_seconds = float(max_audio_seconds)
        self._embedder = None
        self._lock = threading.Lock()

    def attach(self, embedder) -> None:
        self._embedder = embedder

    @property
    def ready(self) -> bool:
        return self._embedder is not None

    def handle(self, method: str, path: str, payload=None):
        """One request in, (status, body dict) out. Never raises."""
        if self._embedder is None:
            return 503, {"error": "model is warming up; retry shortly"}
        method = method.upper()
        if method == "GET" and path == "/v1/info":
            return 200, {
                "embedding_dim": self._embedder.embedding_dim,
                "sample_rate": self._embedder.sample_rate,
                "model_id": self._embedder.model_id,
            }
        if method == "POST" and path == "/v1/embed/text":
            return self._embed_text(payload)
        if method == "POST" and path == "/v1/embed/audio":
            return self._embed_audio(payload)
        return 400, {"error": f"unsupported route {method} {path}"}

    def _embed_text(self, payload):
        if not isinstance(payload, dict) or "texts" not in payload:
            return 400, {"error": "body must be a JSON object with a 'texts' field"}
        texts = payload["texts"]
        if not isinstance(texts, list) or not all(isinstance(t, str) for t in texts):
            return 400, {"error": "'texts' must be a list of strings"}
        if not texts:
            return 400, {"error": "'texts' must not be empty"}
        try:
            with self._lock:
                rows = self._embedder.embed_texts(texts)
        except Exception as exc:
            return 500, {"error": f"text inference failed: {type(exc).__name__}: {exc}"}
        return 200, {"embeddings": [[float(v) for v in row] for row in rows]}

    def _embed_audio(self, payload):
        if not isinstance(payload, dict):
            return 400, {"error": "body must be a JSON object"}
        rate = payload.get("sample_rate")
        encoded = payload.get("audio_b64")
        if not isinstance(rate, int) or isinstance(rate, bool) or rate <= 0:
            return 400, {"error": "'sample_rate' must be a positive integer"}
        if not isinstance(encoded, str):
            return 400, {"error": "'audio_b64' must be a base64 string"}
        try:
            raw = base64.b64decode(encoded, validate=True)
        except (binascii.Error, ValueError):
            return 400, {"error": "'audio_b64' is not valid base64"}
        if len(raw) == 0:
            return 400, {"error": "audio payload is empty"}
        if len(raw) % 4 != 0:
            return 400, {
                "error": f"audio byte length {len(raw)} is not a multiple of 4 (float-32 PCM)"
            }
        samples = np.frombuffer(raw, dtype="<f4").astype(np.float64)
        if not np.all(np.isfinite(samples)):
            return 400, {"error": "audio contains non-finite samples"}
        duration = samples.size / rate
        if duration > self.max_audio_seconds:
            return 400, {
                "error": f"audio is {duration:.1f} s; this service accepts "
                f"at most {self.max_audio_seconds:g} s"
            }
        try:
            with self._lock:
                vector = self._embedder.embed_audio(samples, rate)
        except Exception as exc:
            return 500, {"error": f"audio inference failed: {type(exc).__name__}: {exc}"}
        return 200, {"embedding": [float(v) for v in vector]}
