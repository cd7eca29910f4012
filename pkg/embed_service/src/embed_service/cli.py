"""Command-line launcher: embed-service [flags]."""

from __future__ import annotations

import argparse

from .model import DEFAULT_MODEL_ID
from .server import serve
from .service import ServiceConfig


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embed-service",
        description="Serve text/audio embeddings from a CLAP checkpoint "
        "over a small JSON protocol.",
    )
    parser.add_argument("--model-id", default=DEFAULT_MODEL_ID,
                        help=f"checkpoint to load (default {DEFAULT_MODEL_ID})")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8765)
    parser.add_argument("--device", default="cpu", choices=("cpu", "gpu"))
    parser.add_argument("--max-audio-seconds", type=float, default=30.0,
                        help="reject audio longer than this (default 30)")
    parser.add_argument("--untrained", action="store_true",
                        help="skip the checkpoint download and serve seeded "
                        "random weights (offline testing only)")
    parser.add_argument("--fallback-seed", type=int, default=0,
                        help="weight seed for the untrained fallback")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = ServiceConfig(
            model_id=args.model_id,
            host=args.host,
            port=args.port,
            device=args.device,
            max_audio_seconds=args.max_audio_seconds,
            prefer_pretrained=not args.untrained,
            fallback_seed=args.fallback_seed,
        )
    except ValueError as exc:
        print(f"error: {exc}")
        return 2
    serve(config)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
