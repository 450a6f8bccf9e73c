"""Command-line entry point: load a checkpoint, serve the protocol."""

from __future__ import annotations

import argparse
import sys
from typing import List, Optional

import uvicorn

from .app import create_app
from .backends import load_backend


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fuselm-model-server",
        description="Serve next-token distributions from a model checkpoint "
                    "over the fuselm wire protocol.",
    )
    parser.add_argument("--model", required=True,
                        help="checkpoint path / hub id, or a .ngm n-gram file")
    parser.add_argument("--model-type", choices=["auto", "hf", "ngram"],
                        default="auto")
    parser.add_argument("--device", default="cpu", help="torch device for hf models")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8000)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    backend = load_backend(args.model, model_type=args.model_type, device=args.device)
    print(f"serving {backend.model_id} (|V|={backend.vocab_size}) "
          f"on http://{args.host}:{args.port}")
    uvicorn.run(create_app(backend), host=args.host, port=args.port,
                log_level="warning")
    return 0


if __name__ == "__main__":
    sys.exit(main())
