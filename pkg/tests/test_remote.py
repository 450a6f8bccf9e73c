import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from fuselm.cache import dump_cache
from fuselm.errors import ProtocolError, RemoteUnavailable, VocabMismatch
from fuselm.loopback import serve_lm
from fuselm.remote import RemoteLM, remote_meta, remote_next_dist


@pytest.fixture
def served(small_lms):
    small, _ = small_lms
    with serve_lm(small, "unit-test-lm") as url:
        yield url, small


class TestProtocol:
    def test_meta(self, served):
        url, lm = served
        meta = remote_meta(url)
        assert meta["vocab_size"] == lm.vocab_size
        assert meta["model"] == "unit-test-lm"

    def test_distributions_match_local(self, served, rng):
        url, lm = served
        ctxs = [list(rng.integers(0, 50, n)) for n in (0, 3, 7)]
        remote = remote_next_dist(url, ctxs)
        assert len(remote) == 3
        for ctx, r in zip(ctxs, remote):
            assert r == pytest.approx(lm.next_dist(ctx), abs=1e-9)
            assert abs(r.sum() - 1.0) < 1e-5

    def test_batch_order_preserved(self, served, rng):
        url, lm = served
        ctxs = [[1], [2], [3]]
        out = remote_next_dist(url, ctxs)
        for ctx, r in zip(ctxs, out):
            assert np.argmax(r) == np.argmax(lm.next_dist(ctx))

    def test_remote_lm_seq_dists(self, served, rng):
        url, lm = served
        r = RemoteLM(url, max_batch=4)
        seq = rng.integers(0, 50, 9)
        assert r.seq_dists(seq) == pytest.approx(lm.seq_dists(seq), abs=1e-9)

    def test_cache_via_remote_matches_local(self, served, small_lms, rng):
        url, _ = served
        small, large = small_lms
        seqs = [rng.integers(0, 50, 12) for _ in range(2)]
        local = dump_cache(small, large, seqs)
        via_remote = dump_cache(RemoteLM(url), large, seqs)
        assert np.abs(local.p_small - via_remote.p_small).max() <= 1e-6
        assert np.array_equal(local.targets, via_remote.targets)


class _StubHandler(BaseHTTPRequestHandler):
    """Configurable misbehaving endpoint."""

    behavior = "uniform"
    vocab_size = 6

    def log_message(self, *a):
        pass

    def _send(self, code, payload):
        body = json.dumps(payload).encode()
        self.send_response(code)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        self._send(200, {"vocab_size": self.vocab_size, "model": "stub"})

    def do_POST(self):
        n = int(self.headers.get("Content-Length", 0))
        contexts = json.loads(self.rfile.read(n))["contexts"]
        V = self.vocab_size
        if self.behavior == "uniform":
            row = list(np.log(np.full(V, 1.0 / V)))
            self._send(200, {"vocab_size": V, "logprobs": [row] * len(contexts)})
        elif self.behavior == "one-hot-ish":
            p = np.full(V, 1e-12)
            p[2] = 1.0
            self._send(200, {"vocab_size": V,
                             "logprobs": [list(np.log(p))] * len(contexts)})
        elif self.behavior == "short-row":
            self._send(200, {"vocab_size": V, "logprobs": [[0.0] * (V - 1)] * len(contexts)})
        elif self.behavior == "not-json":
            self.send_response(200)
            self.send_header("Content-Length", "5")
            self.end_headers()
            self.wfile.write(b"hello")
        elif self.behavior == "missing-keys":
            self._send(200, {"something": "else"})
        elif self.behavior == "http-error":
            self._send(500, {"error": {"code": "boom", "message": "no"}})


@pytest.fixture
def stub():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    url = f"http://127.0.0.1:{server.server_address[1]}"
    try:
        yield url
    finally:
        server.shutdown()
        thread.join(timeout=5)
        server.server_close()


class TestClientContract:
    def test_uniform_stub_passthrough(self, stub):
        _StubHandler.behavior = "uniform"
        (d,) = remote_next_dist(stub, [[1, 2]])
        assert d == pytest.approx(np.full(6, 1 / 6), abs=1e-12)

    def test_renormalizes_after_exp(self, stub):
        _StubHandler.behavior = "one-hot-ish"
        (d,) = remote_next_dist(stub, [[0]])
        assert abs(d.sum() - 1.0) < 1e-12
        assert d[2] == pytest.approx(1.0, abs=1e-9)

    def test_wrong_vector_length(self, stub):
        _StubHandler.behavior = "short-row"
        with pytest.raises(VocabMismatch):
            remote_next_dist(stub, [[0]])

    def test_malformed_payload(self, stub):
        _StubHandler.behavior = "not-json"
        with pytest.raises(ProtocolError):
            remote_next_dist(stub, [[0]])

    def test_missing_keys(self, stub):
        _StubHandler.behavior = "missing-keys"
        with pytest.raises(ProtocolError):
            remote_next_dist(stub, [[0]])

    def test_http_error_status(self, stub):
        _StubHandler.behavior = "http-error"
        with pytest.raises(ProtocolError):
            remote_next_dist(stub, [[0]])

    def test_unreachable_endpoint(self):
        with pytest.raises(RemoteUnavailable):
            remote_next_dist("http://127.0.0.1:9", [[0]], timeout=0.5)
