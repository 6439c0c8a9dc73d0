"""Regenerate the bundled test assets: sample images and golden transcript.

Deterministic by construction; run from the server/ directory:
    python scripts/make_assets.py
"""

from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np

from sagserver.app import create_app
from sagserver.models import ToyPrototypeModel

ASSETS = Path(__file__).resolve().parent.parent / "tests"


def save_png(image: np.ndarray, path: Path) -> None:
    from PIL import Image

    data = np.round(image * 255.0).astype(np.uint8)
    Image.fromarray(data, "RGB").save(path, format="PNG")


def sample_images(model: ToyPrototypeModel):
    """Five images, each painting one prototype bump over low background."""
    rng = np.random.default_rng(7)
    h, w = model.input_height, model.input_width
    ys, xs = np.mgrid[0:h, 0:w]
    images = []
    for k in range(5):
        proto = model._prototypes[k]
        cy, cx = np.unravel_index(np.argmax(proto), proto.shape)
        img = rng.uniform(0.0, 0.15, size=(h, w, 3))
        bump = np.exp(-((ys - cy) ** 2 + (xs - cx) ** 2) / (2 * 6.0**2))
        img += bump[:, :, None] * model._colors[k] * 0.9
        images.append(np.clip(img, 0, 1))
    return images


def golden_transcript(model: ToyPrototypeModel, images) -> dict:
    """Frozen request/response pairs; both test suites replay them."""
    from fastapi.testclient import TestClient

    client = TestClient(create_app(model))
    meta = client.get("/v1/meta").json()

    def payload(image):
        raw = np.round(image * 255.0).astype(np.uint8).tobytes()
        return {
            "rgb8_b64": base64.b64encode(raw).decode("ascii"),
            "height": image.shape[0],
            "width": image.shape[1],
        }

    request = {"images": [payload(images[0]), payload(images[1])]}
    response = client.post("/v1/classify", json=request).json()
    return {"model": model.name, "meta": meta, "request": request, "response": response}


def main():
    model = ToyPrototypeModel()
    images = sample_images(model)
    sample_dir = ASSETS / "sample_images"
    sample_dir.mkdir(parents=True, exist_ok=True)
    for i, image in enumerate(images):
        save_png(image, sample_dir / f"sample{i}.png")
    golden_dir = ASSETS / "golden"
    golden_dir.mkdir(parents=True, exist_ok=True)
    transcript = golden_transcript(model, images)
    (golden_dir / "transcript.json").write_text(json.dumps(transcript, indent=2) + "\n")
    print(f"wrote {len(images)} sample images and the golden transcript under {ASSETS}")


if __name__ == "__main__":
    main()
