"""Embedding backends.

Two implementations of one small duck-typed interface:

* ``BuiltinTestBackend``: in-process, deterministic, dependency-free;
  maps audio to 16 signal statistics and text to fixed vectors. It
  stands in for the real embedding model in tests and offline runs.
* ``HttpBackend``: client for the embedding wire protocol (GET
  /v1/info, POST /v1/embed/text, POST /v1/embed/audio).

``handle_request`` exposes the builtin backend through that same wire
protocol, so the conformance suite can exercise both sides.
"""

from __future__ import annotations

import base64
import binascii
import functools
import hashlib
import time
from dataclasses import dataclass

import numpy as np
import requests

from .errors import BackendProtocolError, BackendTransportError

_RETRY_WAITS_S = (0.5, 1.0, 2.0)
_DEFAULT_TIMEOUT_S = 30.0

_BUILTIN_DIM = 16
_BUILTIN_RATE = 48000
_BUILTIN_MODEL_ID = "builtin-test-v1"
_N_MEL_BANDS = 13
# keeps silence (all-zero statistics) a valid, nonzero embedding
_FEATURE_BIAS = 0.05


@dataclass(frozen=True)
class BackendInfo:
    """What a backend advertises: vector size, expected rate, identity."""

    embedding_dim: int
    sample_rate: int
    model_id: str


@functools.lru_cache(maxsize=8)
def _mel_filterbank(n_bins: int, sample_rate: int) -> np.ndarray:
    """Triangular filters, (bands, bins), spanning 0 Hz to Nyquist."""
    freqs = np.linspace(0.0, sample_rate / 2.0, n_bins)
    mel = lambda f: 2595.0 * np.log10(1.0 + f / 700.0)
    mel_inv = lambda m: 700.0 * (10.0 ** (m / 2595.0) - 1.0)
    edges = mel_inv(np.linspace(mel(0.0), mel(sample_rate / 2.0), _N_MEL_BANDS + 2))
    bank = np.zeros((_N_MEL_BANDS, n_bins))
    for i in range(_N_MEL_BANDS):
        lo, mid, hi = edges[i], edges[i + 1], edges[i + 2]
        up = (freqs - lo) / max(mid - lo, 1e-12)
        down = (hi - freqs) / max(hi - mid, 1e-12)
        bank[i] = np.clip(np.minimum(up, down), 0.0, None)
    return bank


def _audio_features(samples: np.ndarray, sample_rate: int) -> np.ndarray:
    """16 deterministic statistics: RMS, centroid, ZCR, 13 mel energies."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    n = x.size
    rms = float(np.sqrt(np.mean(x * x)))

    spectrum = np.abs(np.fft.rfft(x)) ** 2 / (n * n)
    freqs = np.fft.rfftfreq(n, d=1.0 / sample_rate)
    total = float(spectrum.sum())
    if total > 1e-18:
        centroid = float((freqs * spectrum).sum() / total) / (sample_rate / 2.0)
    else:
        centroid = 0.0

    signs = np.signbit(x)
    zcr = float(np.count_nonzero(signs[1:] != signs[:-1])) / max(n - 1, 1)

    bank = _mel_filterbank(spectrum.size, sample_rate)
    mel_energy = np.sqrt(bank @ spectrum)

    feats = np.concatenate(([rms, centroid, zcr], mel_energy))
    return feats + _FEATURE_BIAS


def _text_vector(rms, centroid, zcr, low, mid, high) -> tuple:
    """Catalogue helper: 3 scalar statistics plus a 5/4/4 mel-band split."""
    return tuple([rms, centroid, zcr] + [low] * 5 + [mid] * 4 + [high] * 4)


# Fixed keyword vectors in the audio-feature coordinate system. Prompts
# hitting several keywords are averaged; everything else falls back to a
# SHA-256-derived vector, so any text embeds deterministically.
_TEXT_CATALOGUE = {
    "bright": _text_vector(0.40, 0.80, 0.60, 0.10, 0.30, 0.80),
    "dark": _text_vector(0.40, 0.12, 0.10, 0.80, 0.30, 0.05),
    "warm": _text_vector(0.45, 0.25, 0.15, 0.65, 0.50, 0.15),
    "muddy": _text_vector(0.45, 0.15, 0.10, 0.85, 0.60, 0.05),
    "harsh": _text_vector(0.60, 0.65, 0.90, 0.30, 0.50, 0.70),
    "distorted": _text_vector(0.70, 0.55, 0.85, 0.40, 0.60, 0.60),
    "noisy": _text_vector(0.55, 0.50, 0.95, 0.45, 0.45, 0.50),
    "clean": _text_vector(0.40, 0.40, 0.20, 0.30, 0.40, 0.30),
    "loud": _text_vector(0.95, 0.45, 0.40, 0.50, 0.50, 0.45),
    "quiet": _text_vector(0.08, 0.35, 0.15, 0.15, 0.15, 0.10),
    "soft": _text_vector(0.15, 0.30, 0.12, 0.25, 0.20, 0.10),
    "echo": _text_vector(0.50, 0.35, 0.25, 0.50, 0.45, 0.25),
    "hall": _text_vector(0.50, 0.30, 0.20, 0.55, 0.45, 0.20),
    "reverb": _text_vector(0.50, 0.32, 0.22, 0.52, 0.46, 0.22),
    "deep": _text_vector(0.50, 0.10, 0.08, 0.90, 0.35, 0.05),
    "crisp": _text_vector(0.45, 0.70, 0.55, 0.12, 0.35, 0.75),
}


def _embed_text_builtin(text: str) -> np.ndarray:
    words = [w for w in "".join(c if c.isalpha() else " " for c in text.lower()).split()]
    hits = [np.array(_TEXT_CATALOGUE[w]) for w in words if w in _TEXT_CATALOGUE]
    if hits:
        return np.mean(hits, axis=0)
    digest = hashlib.sha256(" ".join(words).encode("utf-8")).digest()
    raw = np.frombuffer(digest[:_BUILTIN_DIM], dtype=np.uint8).astype(np.float64)
    return 0.05 + 0.9 * raw / 255.0


class BuiltinTestBackend:
    """Deterministic stand-in for a text/audio embedding model."""

    def info(self) -> BackendInfo:
        return BackendInfo(
            embedding_dim=_BUILTIN_DIM,
            sample_rate=_BUILTIN_RATE,
            model_id=_BUILTIN_MODEL_ID,
        )

    def embed_texts(self, texts) -> np.ndarray:
        return np.stack([_embed_text_builtin(t) for t in texts])

    def embed_audio(self, samples, sample_rate: int) -> np.ndarray:
        return _audio_features(samples, sample_rate)


class HttpBackend:
    """Client for an embedding service speaking the /v1 wire protocol.

    Transport failures and 503 (model still loading) are retried three
    times with 0.5 s / 1 s / 2 s backoff; anything structurally wrong in
    a response raises BackendProtocolError immediately.
    """

    def __init__(self, base_url: str, timeout_s: float = _DEFAULT_TIMEOUT_S):
        self.base_url = base_url.rstrip("/")
        self.timeout_s = float(timeout_s)
        self._session = requests.Session()
        self._info = None

    def _request(self, method: str, path: str, payload=None):
        url = self.base_url + path
        last_error = None
        for attempt in range(1 + len(_RETRY_WAITS_S)):
            if attempt:
                time.sleep(_RETRY_WAITS_S[attempt - 1])
            try:
                resp = self._session.request(
                    method, url, json=payload, timeout=self.timeout_s
                )
            except requests.RequestException as exc:
                last_error = f"{type(exc).__name__}: {exc}"
                continue
            if resp.status_code == 503:
                last_error = "503 service warming up"
                continue
            if resp.status_code != 200:
                detail = ""
                try:
                    detail = resp.json().get("error", "")
                except ValueError:
                    pass
                raise BackendProtocolError(
                    f"{method} {path} returned {resp.status_code}: {detail or resp.text[:200]}"
                )
            try:
                return resp.json()
            except ValueError as exc:
                raise BackendProtocolError(f"{method} {path}: response is not JSON ({exc})")
        raise BackendTransportError(
            f"{method} {url} failed after {1 + len(_RETRY_WAITS_S)} attempts ({last_error})"
        )

    def info(self) -> BackendInfo:
        if self._info is None:
            body = self._request("GET", "/v1/info")
            try:
                self._info = BackendInfo(
                    embedding_dim=int(body["embedding_dim"]),
                    sample_rate=int(body["sample_rate"]),
                    model_id=str(body["model_id"]),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise BackendProtocolError(f"malformed /v1/info response: {exc}")
        return self._info

    def _check_vector(self, values, dim: int) -> np.ndarray:
        vec = np.asarray(values, dtype=np.float64)
        if vec.ndim != 1 or vec.size != dim or not np.all(np.isfinite(vec)):
            raise BackendProtocolError(
                f"backend returned a malformed embedding (shape {vec.shape})"
            )
        return vec

    def embed_texts(self, texts) -> np.ndarray:
        texts = [str(t) for t in texts]
        dim = self.info().embedding_dim
        body = self._request("POST", "/v1/embed/text", {"texts": texts})
        try:
            rows = body["embeddings"]
        except (KeyError, TypeError) as exc:
            raise BackendProtocolError(f"malformed /v1/embed/text response: {exc}")
        if not isinstance(rows, list) or len(rows) != len(texts):
            raise BackendProtocolError(
                f"expected {len(texts)} embeddings, got {len(rows) if isinstance(rows, list) else type(rows).__name__}"
            )
        return np.stack([self._check_vector(r, dim) for r in rows]) if rows else np.zeros((0, dim))

    def embed_audio(self, samples, sample_rate: int) -> np.ndarray:
        dim = self.info().embedding_dim
        pcm = np.asarray(samples, dtype="<f4").ravel().tobytes()
        body = self._request(
            "POST",
            "/v1/embed/audio",
            {
                "sample_rate": int(sample_rate),
                "audio_b64": base64.b64encode(pcm).decode("ascii"),
            },
        )
        try:
            values = body["embedding"]
        except (KeyError, TypeError) as exc:
            raise BackendProtocolError(f"malformed /v1/embed/audio response: {exc}")
        return self._check_vector(values, dim)


def handle_request(backend, method: str, path: str, payload=None):
    """Serve one wire-protocol request from an in-process backend.

    Returns (status_code, response_dict). This is the reference
    server-side behavior the conformance goldens are written against.
    """
    method = method.upper()
    if method == "GET" and path == "/v1/info":
        info = backend.info()
        return 200, {
            "embedding_dim": info.embedding_dim,
            "sample_rate": info.sample_rate,
            "model_id": info.model_id,
        }

    if method == "POST" and path == "/v1/embed/text":
        if not isinstance(payload, dict) or "texts" not in payload:
            return 400, {"error": "body must be a JSON object with a 'texts' field"}
        texts = payload["texts"]
        if not isinstance(texts, list) or not all(isinstance(t, str) for t in texts):
            return 400, {"error": "'texts' must be a list of strings"}
        if not texts:
            return 400, {"error": "'texts' must not be empty"}
        embeddings = backend.embed_texts(texts)
        return 200, {"embeddings": [[float(v) for v in row] for row in embeddings]}

    if method == "POST" and path == "/v1/embed/audio":
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
            return 400, {"error": f"audio byte length {len(raw)} is not a multiple of 4 (float-32 PCM)"}
        samples = np.frombuffer(raw, dtype="<f4").astype(np.float64)
        if not np.all(np.isfinite(samples)):
            return 400, {"error": "audio contains non-finite samples"}
        embedding = backend.embed_audio(samples, rate)
        return 200, {"embedding": [float(v) for v in embedding]}

    return 400, {"error": f"unsupported route {method} {path}"}
