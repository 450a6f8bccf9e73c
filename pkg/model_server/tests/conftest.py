import threading
import time

import numpy as np
import pytest
import uvicorn
from fastapi.testclient import TestClient

from model_server.app import create_app
from model_server.backends import HFCausalBackend, NGramBackend


@pytest.fixture(scope="session")
def checkpoint_dir(tmp_path_factory):
    """A tiny randomly initialized checkpoint of a public causal-LM
    architecture. Conformance properties (meta consistency, ordering,
    normalization, determinism) are weight-independent, so no pretrained
    download is needed."""
    import torch
    from transformers import GPT2Config, GPT2LMHeadModel

    torch.manual_seed(0)
    config = GPT2Config(
        vocab_size=96, n_positions=48, n_embd=32, n_layer=2, n_head=2,
        bos_token_id=0, eos_token_id=0,
    )
    model = GPT2LMHeadModel(config)
    path = tmp_path_factory.mktemp("checkpoint") / "tiny-gpt2"
    model.save_pretrained(path)
    return str(path)


@pytest.fixture(scope="session")
def hf_backend(checkpoint_dir):
    return HFCausalBackend(checkpoint_dir, device="cpu")


@pytest.fixture(scope="session")
def client(hf_backend):
    return TestClient(create_app(hf_backend))


@pytest.fixture(scope="session")
def ngram_model(tmp_path_factory):
    """A saved fuselm n-gram model plus its in-memory twin."""
    from fuselm.ngram import ngram_train

    rng = np.random.default_rng(7)
    seqs = [rng.integers(0, 30, 50) for _ in range(5)]
    lm = ngram_train(seqs, order=3, alpha=0.4, vocab_size=30, bos_id=0,
                     name="shim")
    path = tmp_path_factory.mktemp("ngram") / "shim.ngm"
    lm.save(path)
    return str(path), lm


class LiveServer:
    """uvicorn on an ephemeral port in a daemon thread."""

    def __init__(self, app):
        self._config = uvicorn.Config(app, host="127.0.0.1", port=0,
                                      log_level="error")
        self.server = uvicorn.Server(self._config)
        self._thread = threading.Thread(target=self.server.run, daemon=True)

    def __enter__(self) -> str:
        self._thread.start()
        for _ in range(200):
            if self.server.started:
                break
            time.sleep(0.025)
        else:
            raise RuntimeError("server did not start")
        port = self.server.servers[0].sockets[0].getsockname()[1]
        return f"http://127.0.0.1:{port}"

    def __exit__(self, *exc):
        self.server.should_exit = True
        self._thread.join(timeout=5)
