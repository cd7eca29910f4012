"""Threaded HTTP front end for the embedding app.

Connections are accepted concurrently (one thread each); actual model
calls are serialized by the app's inference lock. The model loads in
the background so the socket is live immediately, answering 503 until
the weights are ready.
"""

from __future__ import annotations

import json
import sys
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .model import load_embedder
from .service import EmbedApp, ServiceConfig


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def _respond(self, status: int, body: dict) -> None:
        data = json.dumps(body).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        # one request per connection: a handler thread parked on a
        # keep-alive socket would still hold native inference frames,
        # and tearing those down at interpreter exit aborts the process
        self.send_header("Connection", "close")
        self.end_headers()
        self.wfile.write(data)

    def _dispatch(self, method: str) -> None:
        payload = None
        length = int(self.headers.get("Content-Length") or 0)
        if length:
            try:
                payload = json.loads(self.rfile.read(length))
            except (json.JSONDecodeError, UnicodeDecodeError):
                self._respond(400, {"error": "request body is not valid JSON"})
                return
        status, body = self.server.app.handle(method, self.path, payload)
        self._respond(status, body)

    def do_GET(self) -> None:  # noqa: N802 (http.server API)
        self._dispatch("GET")

    def do_POST(self) -> None:  # noqa: N802
        self._dispatch("POST")

    def log_message(self, format, *args) -> None:
        pass  # request logging would swamp optimization runs


class EmbedHTTPServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, app: EmbedApp, host: str, port: int):
        self.app = app
        super().__init__((host, port), _Handler)


def build_server(app: EmbedApp, host: str = "127.0.0.1", port: int = 0) -> EmbedHTTPServer:
    """Bind a server for the app; port 0 picks a free port."""
    return EmbedHTTPServer(app, host, port)


def serve(config: ServiceConfig) -> None:
    """Run the service until interrupted."""
    app = EmbedApp(max_audio_seconds=config.max_audio_seconds)
    server = build_server(app, config.host, config.port)
    host, port = server.server_address[:2]
    print(f"listening on http://{host}:{port} (503 until the model is warm)")

    def _load() -> None:
        embedder = load_embedder(
            model_id=config.model_id,
            device=config.device,
            prefer_pretrained=config.prefer_pretrained,
            fallback_seed=config.fallback_seed,
        )
        app.attach(embedder)
        print(
            f"ready: model_id={embedder.model_id} "
            f"embedding_dim={embedder.embedding_dim} "
            f"sample_rate={embedder.sample_rate}",
            file=sys.stderr,
        )

    threading.Thread(target=_load, name="model-loader", daemon=True).start()
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
