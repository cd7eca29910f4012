"""HTTP embedding service around a CLAP checkpoint."""

from .model import DEFAULT_MODEL_ID, UNTRAINED_SUFFIX, ClapEmbedder, load_embedder
from .server import EmbedHTTPServer, build_server, serve
from .service import EmbedApp, ServiceConfig

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_MODEL_ID",
    "UNTRAINED_SUFFIX",
    "ClapEmbedder",
    "EmbedApp",
    "EmbedHTTPServer",
    "ServiceConfig",
    "build_server",
    "load_embedder",
    "serve",
    "__version__",
]
