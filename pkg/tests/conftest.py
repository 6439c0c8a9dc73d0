"""Shared fixtures: synthetic instances and a stub model server.

The stub server speaks the /v1/meta + /v1/classify wire protocol around any
in-process classifier, so the remote client and the CLI can be exercised
end-to-end against ground-truth synthetics without a real model.
"""

from __future__ import annotations

import base64
import json
import random
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from sagraph import PatchGrid, SyntheticMonotoneDnf
from sagraph.imaging import decode_rgb8


def random_disjoint_terms(rng: random.Random, r=7, max_terms=3, max_size=4,
                          total_cap=None, fixed_size=None):
    n_terms = rng.randint(1, max_terms)
    patches = list(range(r * r))
    rng.shuffle(patches)
    terms, pos = [], 0
    for _ in range(n_terms):
        size = fixed_size if fixed_size is not None else rng.randint(1, max_size)
        if total_cap is not None and pos + size > total_cap:
            break
        terms.append(sorted(patches[pos:pos + size]))
        pos += size
    if not terms:
        terms = [sorted(patches[:fixed_size or 1])]
    return terms


@pytest.fixture
def ones_image():
    return np.ones((28, 28, 3), dtype=np.float64)


@pytest.fixture
def grid28():
    return PatchGrid(7, 28, 28)


class _StubHandler(BaseHTTPRequestHandler):
    classifier = None
    meta = None
    fail_item: int | None = None

    def log_message(self, *args):
        pass

    def _send_json(self, code: int, payload: dict):
        body = json.dumps(payload).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path == "/v1/meta":
            self._send_json(200, self.meta)
        else:
            self._send_json(404, {"error": "not found"})

    def do_POST(self):
        if self.path != "/v1/classify":
            self._send_json(404, {"error": "not found"})
            return
        length = int(self.headers.get("Content-Length", 0))
        try:
            payload = json.loads(self.rfile.read(length))
            images = payload["images"]
        except Exception:
            self._send_json(400, {"error": "malformed request"})
            return
        probs = []
        for index, item in enumerate(images):
            if self.fail_item is not None and index == self.fail_item:
                self._send_json(400, {"error": "injected failure", "index": index})
                return
            try:
                image = decode_rgb8(
                    base64.b64decode(item["rgb8_b64"]), item["height"], item["width"]
                )
            except Exception:
                self._send_json(400, {"error": "bad image payload", "index": index})
                return
            probs.append([float(v) for v in self.classifier.classify(image)])
        self._send_json(200, {"probs": probs})


class StubServer:
    """Threaded wire-protocol server around an in-process classifier."""

    def __init__(self, classifier, input_height=28, input_width=28):
        handler = type("Handler", (_StubHandler,), {})
        handler.classifier = classifier
        handler.meta = {
            "num_classes": classifier.num_classes,
            "input_height": input_height,
            "input_width": input_width,
        }
        self.handler = handler
        self._server = ThreadingHTTPServer(("127.0.0.1", 0), handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def endpoint(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}"

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._server.shutdown()
        self._server.server_close()


@pytest.fixture
def stub_server():
    clf = SyntheticMonotoneDnf(7, [[3, 7]])
    with StubServer(clf) as server:
        yield server
