"""FastAPI application implementing the distribution wire protocol.

Routes:

* ``GET /v1/meta`` -> ``{"vocab_size": N, "model": "<id>"}``
* ``POST /v1/distribution`` with ``{"contexts": [[id, ...], ...]}`` ->
  ``{"vocab_size": N, "logprobs": [[...], ...]}``; natural-log
  probabilities (a log-softmax over the full vocabulary at the final
  context position), one row per context, in request order.

Errors come back as ``{"error": {"code": ..., "message": ...}}`` with
status 400; an over-long context uses code ``context_overflow``.

The server is stateless per request and runs inference sequentially under
an inference lock: ordering within a request's batch is guaranteed and
repeated identical requests return identical values.
"""

from __future__ import annotations

import threading
from typing import List

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .backends import BadTokenId, ContextOverflow


class DistributionRequest(BaseModel):
    contexts: List[List[int]]


def _error(code: str, message: str, status: int = 400) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content={"error": {"code": code, "message": message}},
    )


def create_app(backend) -> FastAPI:
    app = FastAPI(title="fuselm-model-server")
    lock = threading.Lock()

    @app.get("/v1/meta")
    def meta():
        return {"vocab_size": backend.vocab_size, "model": backend.model_id}

    @app.post("/v1/distribution")
    def distribution(req: DistributionRequest):
        try:
            with lock:  # single inference worker
                rows = backend.next_logprobs(req.contexts)
        except ContextOverflow as e:
            return _error("context_overflow", str(e))
        except BadTokenId as e:
            return _error("bad_token", str(e))
        return {"vocab_size": backend.vocab_size, "logprobs": rows}

    return app
