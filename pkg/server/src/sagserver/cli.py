"""Serve a model over the classify wire protocol: sagraph-server --model toy."""

from __future__ import annotations

import argparse

import uvicorn

from .app import create_app
from .models import load_model


def serve(model_name: str, port: int, host: str = "127.0.0.1") -> None:
    model = load_model(model_name)
    app = create_app(model)
    uvicorn.run(app, host=host, port=port, log_level="warning")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--model",
        default="toy",
        choices=["toy", "vgg16", "resnet50"],
        help="toy is a bundled deterministic scorer; vgg16/resnet50 need "
        "torchvision and pretrained weights",
    )
    parser.add_argument("--port", type=int, default=8650)
    parser.add_argument("--host", default="127.0.0.1")
    args = parser.parse_args()
    serve(args.model, args.port, host=args.host)


if __name__ == "__main__":
    main()
