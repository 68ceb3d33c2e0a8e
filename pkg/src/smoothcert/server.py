"""Local classification service speaking the /v1/classify wire protocol.

POST /v1/classify with JSON {"shape": [C, H, W], "pixels": [floats]}
answers {"labels": [{"name": ..., "score": ...}, ...]} sorted by
descending score; ranking ties keep class-index order so the listing is
stable and deterministic for identical payloads. Scores are softmax
probabilities but the ranking is computed on the logits themselves, so
the top-1 answer over the wire agrees exactly with local argmax.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .classifiers import LabelMap, LocalModel
from .errors import BindError
from .nn import Model, softmax


class ClassificationServer:
    def __init__(self, model: Model, label_map: LabelMap, port: int = 0, host: str = "127.0.0.1"):
        self.handle = LocalModel(model)
        if len(label_map.labels) != self.handle.num_classes:
            raise BindError(
                f"label map has {len(label_map.labels)} names for {self.handle.num_classes} classes"
            )
        self.label_map = label_map
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, fmt, *args):  # keep test output quiet
                pass

            def _reply(self, status: int, payload: dict) -> None:
                body = json.dumps(payload).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def do_POST(self) -> None:
                if self.path != "/v1/classify":
                    self._reply(404, {"error": "path"})
                    return
                try:
                    length = int(self.headers.get("Content-Length", "0"))
                    request = json.loads(self.rfile.read(length))
                except (ValueError, TypeError):
                    self._reply(400, {"error": "json"})
                    return
                try:
                    labels = outer._classify_payload(request)
                except _PayloadError as exc:
                    self._reply(400, {"error": exc.code})
                    return
                self._reply(200, {"labels": labels})

        try:
            self._httpd = ThreadingHTTPServer((host, port), Handler)
        except OSError as exc:
            raise BindError(f"cannot bind {host}:{port}: {exc}") from exc
        self._thread: threading.Thread | None = None

    def _classify_payload(self, request: dict) -> list[dict]:
        if not isinstance(request, dict):
            raise _PayloadError("json")
        shape = request.get("shape")
        pixels = request.get("pixels")
        if (
            not isinstance(shape, list)
            or len(shape) != 3
            or not all(isinstance(d, int) and d >= 1 for d in shape)
            or not isinstance(pixels, list)
        ):
            raise _PayloadError("shape")
        numel = shape[0] * shape[1] * shape[2]
        if len(pixels) != numel:
            raise _PayloadError("shape")
        try:
            image = np.asarray(pixels, dtype=np.float64).reshape(shape)
        except (ValueError, TypeError):
            raise _PayloadError("shape")
        expected = self.handle.input_shape
        if len(expected) == 1:
            if numel != expected[0]:
                raise _PayloadError("shape")
            image = image.reshape(expected)
        elif tuple(shape) != expected:
            raise _PayloadError("shape")
        logits = self.handle.logits(image[None])[0]
        scores = softmax(logits[None])[0]
        order = np.argsort(-logits, kind="stable")
        return [
            {"name": self.label_map.label_of(int(i)), "score": float(scores[i])} for i in order
        ]

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def endpoint(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "ClassificationServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join()

    def serve_forever(self) -> None:
        self._httpd.serve_forever()


class _PayloadError(Exception):
    def __init__(self, code: str):
        self.code = code


def serve(
    model: Model,
    label_map: LabelMap | None = None,
    port: int = 0,
    host: str = "127.0.0.1",
) -> ClassificationServer:
    """Build (but do not start) a server for the model; callers use
    .start()/.stop() for tests or .serve_forever() from the CLI."""
    if label_map is None:
        label_map = LabelMap.default(int(model.output_shape[-1]))
    return ClassificationServer(model, label_map, port=port, host=host)
