"""HTTP wire protocol for next-token distributions.

``POST /v1/distribution`` with ``{"model": name, "ctx": [ids...]}`` answers
``{"probs": [N floats]}`` or, on failure, ``{"error": message}`` with a
non-2xx status. ``GET /v1/info`` answers ``{"model": name, "vocab_size": N}``
so clients can size the vocabulary before the first forward call.
"""

from __future__ import annotations

import json
import logging
import threading
import urllib.error
import urllib.request
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional

import numpy as np

from ..core import PROB_TOL
from ..errors import InvalidArgument, PyramidError, RemoteBackendError
from .base import ModelBackend

log = logging.getLogger(__name__)

DIST_PATH = "/v1/distribution"
INFO_PATH = "/v1/info"


class RemoteModel(ModelBackend):
    def __init__(self, endpoint_url: str, model_name: str, vocab_size: Optional[int] = None,
                 timeout: float = 30.0):
        self.endpoint_url = endpoint_url.rstrip("/")
        self.name = model_name
        self.timeout = timeout
        if vocab_size is None:
            info = self._get(INFO_PATH)
            vocab_size = info.get("vocab_size")
            if not isinstance(vocab_size, int) or vocab_size < 2:
                raise RemoteBackendError(f"{self.endpoint_url}: bad vocab_size in info response: {info!r}")
        self.vocab_size = int(vocab_size)

    def _get(self, path):
        try:
            with urllib.request.urlopen(self.endpoint_url + path, timeout=self.timeout) as resp:
                return json.loads(resp.read())
        except (OSError, ValueError) as exc:
            raise RemoteBackendError(f"{self.endpoint_url}{path}: {exc}") from exc

    def next_distribution(self, ctx):
        ctx = [int(t) for t in ctx]
        body = json.dumps({"model": self.name, "ctx": ctx}).encode()
        req = urllib.request.Request(self.endpoint_url + DIST_PATH, data=body,
                                     headers={"Content-Type": "application/json"}, method="POST")
        where = f"{self.endpoint_url} (context length {len(ctx)})"
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                payload = json.loads(resp.read())
        except urllib.error.HTTPError as exc:
            try:
                msg = json.loads(exc.read()).get("error", exc.reason)
            except (ValueError, AttributeError):
                msg = exc.reason
            raise RemoteBackendError(f"{where}: HTTP {exc.code}: {msg}") from exc
        except (OSError, ValueError) as exc:
            raise RemoteBackendError(f"{where}: {exc}") from exc

        try:
            probs = np.asarray(payload["probs"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise RemoteBackendError(f"{where}: malformed response {str(payload)[:200]}") from exc
        if probs.shape != (self.vocab_size,):
            raise RemoteBackendError(f"{where}: expected {self.vocab_size} probabilities, got {probs.shape}")
        if not np.all(np.isfinite(probs)) or np.any(probs < 0):
            raise RemoteBackendError(f"{where}: negative or non-finite probabilities")
        s = float(probs.sum())
        if abs(s - 1.0) > PROB_TOL:
            raise RemoteBackendError(f"{where}: probabilities sum to {s!r}")
        return probs


def remote_backend(endpoint_url: str, model_name: str, vocab_size: Optional[int] = None) -> RemoteModel:
    return RemoteModel(endpoint_url, model_name, vocab_size)


def _make_handler(backend: ModelBackend):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def _send(self, status: int, obj) -> None:
            data = json.dumps(obj).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_GET(self):
            if self.path == INFO_PATH:
                self._send(200, {"model": backend.name, "vocab_size": backend.vocab_size})
            else:
                self._send(404, {"error": f"unknown path {self.path}"})

        def do_POST(self):
            if self.path != DIST_PATH:
                self._send(404, {"error": f"unknown path {self.path}"})
                return
            try:
                n = int(self.headers.get("Content-Length", 0))
                req = json.loads(self.rfile.read(n))
                ctx = tuple(int(t) for t in req["ctx"])
            except (ValueError, KeyError, TypeError) as exc:
                self._send(400, {"error": f"bad request: {exc}"})
                return
            if any(not 0 <= t < backend.vocab_size for t in ctx):
                self._send(400, {"error": "context token outside vocabulary"})
                return
            try:
                probs = np.asarray(backend.next_distribution(ctx), dtype=np.float64)
            except PyramidError as exc:
                self._send(422, {"error": str(exc)})
                return
            except Exception as exc:  # keep the server alive; the client surfaces the message
                log.exception("backend failure")
                self._send(500, {"error": f"{type(exc).__name__}: {exc}"})
                return
            self._send(200, {"probs": probs.tolist()})

        def log_message(self, fmt, *args):
            log.info("%s %s", self.address_string(), fmt % args)

    return Handler


class ServiceHandle:
    def __init__(self, server: ThreadingHTTPServer, thread: threading.Thread):
        self.server = server
        self.thread = thread

    @property
    def url(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}"

    def shutdown(self) -> None:
        self.server.shutdown()
        self.server.server_close()
        self.thread.join()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.shutdown()


def parse_bind(address: str) -> tuple:
    host, sep, port = address.rpartition(":")
    if not sep:
        raise InvalidArgument(f"bind address must be host:port, got {address!r}")
    try:
        return host or "127.0.0.1", int(port)
    except ValueError as exc:
        raise InvalidArgument(f"bad port in bind address {address!r}") from exc


def serve_backend(backend: ModelBackend, bind_address: str = "127.0.0.1:0") -> ServiceHandle:
    """Serve ``backend`` on a background thread; port 0 picks a free port."""
    host, port = parse_bind(bind_address)
    try:
        server = ThreadingHTTPServer((host, port), _make_handler(backend))
    except OSError as exc:
        raise PyramidError(f"cannot bind {bind_address}: {exc}") from exc
    server.daemon_threads = True
    thread = threading.Thread(target=server.serve_forever, name=f"serve-{backend.name}", daemon=True)
    thread.start()
    return ServiceHandle(server, thread)
