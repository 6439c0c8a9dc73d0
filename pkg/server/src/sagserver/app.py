"""FastAPI application implementing the classify wire protocol.

  GET  /v1/meta     -> {"num_classes": N, "input_height": H, "input_width": W}
  POST /v1/classify    {"images": [{"rgb8_b64": ..., "height": H, "width": W}]}
                    -> {"probs": [[...], ...]}

Malformed requests get 400 with {"error": ..., "index": k} when a specific
batch item is at fault; oversized batches get 413. Inference is serialized
behind a lock so concurrent requests stay deterministic and order-preserving.
"""

from __future__ import annotations

import base64
import binascii
import threading

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

MAX_BATCH = 64


def _error(status: int, message: str, index: int | None = None) -> JSONResponse:
    payload = {"error": message}
    if index is not None:
        payload["index"] = index
    return JSONResponse(status_code=status, content=payload)


def _decode_item(item, expected_h: int, expected_w: int) -> np.ndarray:
    if not isinstance(item, dict):
        raise ValueError("image entry must be an object")
    for key in ("rgb8_b64", "height", "width"):
        if key not in item:
            raise ValueError(f"image entry missing {key!r}")
    height, width = int(item["height"]), int(item["width"])
    if (height, width) != (expected_h, expected_w):
        raise ValueError(
            f"image is {height}x{width}, model expects {expected_h}x{expected_w}"
        )
    try:
        raw = base64.b64decode(item["rgb8_b64"], validate=True)
    except (binascii.Error, TypeError) as exc:
        raise ValueError("rgb8_b64 is not valid base64") from exc
    if len(raw) != height * width * 3:
        raise ValueError(
            f"expected {height * width * 3} bytes, got {len(raw)}"
        )
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(height, width, 3)
    return pixels.astype(np.float64) / 255.0


def create_app(model) -> FastAPI:
    app = FastAPI(title="sagraph model server")
    inference_lock = threading.Lock()

    @app.get("/v1/meta")
    def meta():
        return {
            "num_classes": model.num_classes,
            "input_height": model.input_height,
            "input_width": model.input_width,
        }

    @app.post("/v1/classify")
    async def classify(request: Request):
        try:
            payload = await request.json()
        except Exception:
            return _error(400, "request body is not JSON")
        if not isinstance(payload, dict) or "images" not in payload:
            return _error(400, "request must carry an 'images' array")
        images = payload["images"]
        if not isinstance(images, list):
            return _error(400, "'images' must be an array")
        if len(images) > MAX_BATCH:
            return _error(413, f"batch of {len(images)} exceeds limit {MAX_BATCH}")
        if not images:
            return {"probs": []}
        decoded = []
        for index, item in enumerate(images):
            try:
                decoded.append(
                    _decode_item(item, model.input_height, model.input_width)
                )
            except ValueError as exc:
                return _error(400, str(exc), index=index)
        batch = np.stack(decoded)
        with inference_lock:
            probs = model.predict(batch)
        return {"probs": [[float(v) for v in row] for row in probs]}

    return app
