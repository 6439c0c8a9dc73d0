"""HTTP client for an external model server.

Wire protocol (bit-exact):
  GET  /v1/meta     -> {"num_classes": N, "input_height": H, "input_width": W}
  POST /v1/classify    {"images": [{"rgb8_b64": <base64 of H*W*3 bytes,
                        row-major>, "height": H, "width": W}, ...]}
                    -> {"probs": [[...], ...]}

Raw 8-bit RGB avoids codec nondeterminism; all model-specific preprocessing
stays on the server so this client is model-agnostic.
"""

from __future__ import annotations

import base64
import os
import time
from dataclasses import dataclass

import numpy as np
import requests

from .classifiers import Classifier
from .imaging import encode_rgb8, validate_image

ENDPOINT_ENV_VAR = "SAG_MODEL_ENDPOINT"


class TransportError(RuntimeError):
    """Connection or timeout failure talking to the model server."""


class ProtocolError(RuntimeError):
    """The server answered, but not with the protocol we speak."""


@dataclass(frozen=True)
class ServerMetadata:
    num_classes: int
    input_height: int
    input_width: int


def resolve_endpoint(explicit: str | None = None) -> str:
    endpoint = explicit or os.environ.get(ENDPOINT_ENV_VAR)
    if not endpoint:
        raise TransportError(
            f"no model endpoint: pass --endpoint or set {ENDPOINT_ENV_VAR}"
        )
    return endpoint.rstrip("/")


def fetch_metadata(endpoint: str, timeout: float = 10.0) -> ServerMetadata:
    try:
        response = requests.get(f"{endpoint.rstrip('/')}/v1/meta", timeout=timeout)
    except requests.RequestException as exc:
        raise TransportError(f"cannot reach model server: {exc}") from exc
    if response.status_code != 200:
        raise ProtocolError(f"/v1/meta returned HTTP {response.status_code}")
    try:
        payload = response.json()
    except ValueError as exc:
        raise ProtocolError("/v1/meta reply is not JSON") from exc
    for key in ("num_classes", "input_height", "input_width"):
        if key not in payload:
            raise ProtocolError(f"/v1/meta reply missing {key!r}")
    return ServerMetadata(
        int(payload["num_classes"]),
        int(payload["input_height"]),
        int(payload["input_width"]),
    )


def encode_image_payload(image: np.ndarray) -> dict:
    image = validate_image(image)
    h, w = image.shape[:2]
    return {
        "rgb8_b64": base64.b64encode(encode_rgb8(image)).decode("ascii"),
        "height": h,
        "width": w,
    }


class RemoteClassifier(Classifier):
    """Classifier backed by the wire protocol above.

    Images must already be at the server's declared input resolution, so the
    served model sees exactly the masked pixels the search reasoned about.
    """

    def __init__(
        self,
        endpoint: str,
        timeout: float = 30.0,
        max_batch: int = 64,
        retries: int = 2,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.max_batch = max_batch
        self.retries = retries
        self.metadata = fetch_metadata(self.endpoint, timeout=timeout)
        self._session = requests.Session()

    @property
    def num_classes(self) -> int:
        return self.metadata.num_classes

    def _check_shape(self, image: np.ndarray) -> None:
        expected = (self.metadata.input_height, self.metadata.input_width)
        if image.shape[:2] != expected:
            raise ValueError(
                f"image {image.shape[:2]} does not match server input {expected}"
            )

    def _post(self, body: dict) -> dict:
        last_exc: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                response = self._session.post(
                    f"{self.endpoint}/v1/classify", json=body, timeout=self.timeout
                )
            except requests.RequestException as exc:
                last_exc = exc
                if attempt < self.retries:
                    time.sleep(0.1 * (attempt + 1))
                continue
            if response.status_code != 200:
                detail = ""
                try:
                    payload = response.json()
                    detail = payload.get("error", "")
                    if "index" in payload:
                        detail += f" (item {payload['index']})"
                except ValueError:
                    pass
                raise ProtocolError(
                    f"/v1/classify returned HTTP {response.status_code}: {detail}"
                )
            try:
                return response.json()
            except ValueError as exc:
                raise ProtocolError("/v1/classify reply is not JSON") from exc
        raise TransportError(f"classify failed after retries: {last_exc}")

    def classify_batch(self, images) -> list[np.ndarray]:
        if len(images) == 0:
            return []
        if len(images) > self.max_batch:
            # Chunking keeps order; each chunk respects the server's limit.
            out: list[np.ndarray] = []
            for start in range(0, len(images), self.max_batch):
                out.extend(self.classify_batch(images[start : start + self.max_batch]))
            return out
        payload = []
        for image in images:
            image = validate_image(image)
            self._check_shape(image)
            payload.append(encode_image_payload(image))
        reply = self._post({"images": payload})
        if "probs" not in reply:
            raise ProtocolError("/v1/classify reply missing 'probs'")
        probs = reply["probs"]
        if len(probs) != len(images):
            raise ProtocolError(
                f"expected {len(images)} vectors, server sent {len(probs)}"
            )
        vectors = []
        for vec in probs:
            arr = np.asarray(vec, dtype=np.float64)
            if arr.shape != (self.num_classes,):
                raise ProtocolError("score vector length does not match num_classes")
            if arr.min() < 0.0 or arr.max() > 1.0:
                raise ProtocolError("score vector outside [0, 1]")
            vectors.append(arr)
        return vectors

    def classify(self, image: np.ndarray) -> np.ndarray:
        return self.classify_batch([image])[0]
