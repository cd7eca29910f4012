"""Shared fixtures: one fallback embedder per session, plus a live server.

Loading even the untrained model takes a while, so the embedder, the
app wrapping it, and the HTTP server on top are all session-scoped.
Tests that need a cold or broken app build their own.
"""

import json
import threading
import urllib.error
import urllib.request
from pathlib import Path

import pytest

from embed_service import EmbedApp, build_server, load_embedder


@pytest.fixture(scope="session")
def embedder():
    # the model hub is not reachable from CI; ask for the fallback
    # directly instead of waiting out a download failure
    return load_embedder(prefer_pretrained=False, fallback_seed=7)


@pytest.fixture(scope="session")
def app(embedder):
    ready = EmbedApp(max_audio_seconds=30.0)
    ready.attach(embedder)
    return ready


@pytest.fixture(scope="session")
def base_url(app):
    server = build_server(app, "127.0.0.1", 0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    host, port = server.server_address[:2]
    yield f"http://{host}:{port}"
    server.shutdown()
    server.server_close()


@pytest.fixture(scope="session")
def http_transport(base_url):
    """(method, path, payload) -> (status, body) over the live server."""

    def transport(method, path, payload=None):
        data = None if payload is None else json.dumps(payload).encode("utf-8")
        request = urllib.request.Request(
            base_url + path,
            data=data,
            method=method,
            headers={"Content-Type": "application/json"},
        )
        try:
            with urllib.request.urlopen(request, timeout=120) as response:
                return response.status, json.loads(response.read())
        except urllib.error.HTTPError as err:
            return err.code, json.loads(err.read())

    return transport


@pytest.fixture(scope="session")
def speech_wav():
    path = Path(__file__).parent / "data" / "speech.wav"
    assert path.exists(), "bundled speech clip missing; run data/make_speech.py"
    return path
