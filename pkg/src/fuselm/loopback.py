"""In-process HTTP server speaking the distribution wire protocol over a
local model. This is test-harness plumbing: it lets the remote code path be
exercised (and caches compared local-vs-remote) without any external
serving stack. It is not a production server and the CLI never daemonizes it.
"""

from __future__ import annotations

import json
import threading
from contextlib import contextmanager
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np


class _Handler(BaseHTTPRequestHandler):
    server_version = "fuselm-loopback/0.1"

    def log_message(self, fmt, *args):  # keep pytest output clean
        pass

    def _send(self, code: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path != "/v1/meta":
            self._send(404, {"error": {"code": "not_found", "message": self.path}})
            return
        lm = self.server.lm
        self._send(200, {"vocab_size": int(lm.vocab_size), "model": self.server.model_name})

    def do_POST(self):
        if self.path != "/v1/distribution":
            self._send(404, {"error": {"code": "not_found", "message": self.path}})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            req = json.loads(self.rfile.read(length))
            contexts = req["contexts"]
            if not isinstance(contexts, list):
                raise ValueError("contexts must be a list")
        except (ValueError, KeyError) as e:
            self._send(400, {"error": {"code": "bad_request", "message": str(e)}})
            return
        lm = self.server.lm
        dists = lm.dists_for_contexts(contexts) if contexts else np.zeros((0, lm.vocab_size))
        self._send(
            200,
            {
                "vocab_size": int(lm.vocab_size),
                "logprobs": np.log(dists).tolist(),
            },
        )


class LoopbackServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, lm, model_name: str = "ngram-loopback", port: int = 0):
        super().__init__(("127.0.0.1", port), _Handler)
        self.lm = lm
        self.model_name = model_name
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        return f"http://127.0.0.1:{self.server_address[1]}"

    def start(self) -> "LoopbackServer":
        self._thread.start()
        return self

    def close(self) -> None:
        self.shutdown()
        self._thread.join(timeout=5)
        self.server_close()


@contextmanager
def serve_lm(lm, model_name: str = "ngram-loopback", port: int = 0):
    """Context manager yielding the base URL of a running loopback server."""
    server = LoopbackServer(lm, model_name, port).start()
    try:
        yield server.url
    finally:
        server.close()
