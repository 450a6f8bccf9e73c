"""Client side of the distribution wire protocol.

Endpoints speak two routes:

* ``GET  /v1/meta``          -> ``{"vocab_size": N, "model": "<string>"}``
* ``POST /v1/distribution``  -> request ``{"contexts": [[id, ...], ...]}``,
  response ``{"vocab_size": N, "logprobs": [[...], ...]}`` with natural-log
  probabilities, one inner array of length N per context, in request order.

Log values survive the trip with full dynamic range; the client
exponentiates and renormalizes to absorb serialization rounding.
"""

from __future__ import annotations

from typing import List, Sequence

import numpy as np
import requests

from .errors import ProtocolError, RemoteUnavailable, VocabMismatch

DEFAULT_TIMEOUT = 60.0


def _post_json(url: str, payload: dict, timeout: float) -> dict:
    try:
        resp = requests.post(url, json=payload, timeout=timeout)
    except requests.RequestException as e:
        raise RemoteUnavailable(f"POST {url}: {e}") from e
    if resp.status_code != 200:
        raise ProtocolError(f"POST {url}: HTTP {resp.status_code}: {resp.text[:200]}")
    try:
        return resp.json()
    except ValueError as e:
        raise ProtocolError(f"POST {url}: response is not JSON") from e


def remote_meta(endpoint: str, timeout: float = DEFAULT_TIMEOUT) -> dict:
    url = endpoint.rstrip("/") + "/v1/meta"
    try:
        resp = requests.get(url, timeout=timeout)
    except requests.RequestException as e:
        raise RemoteUnavailable(f"GET {url}: {e}") from e
    if resp.status_code != 200:
        raise ProtocolError(f"GET {url}: HTTP {resp.status_code}")
    try:
        meta = resp.json()
    except ValueError as e:
        raise ProtocolError(f"GET {url}: response is not JSON") from e
    if "vocab_size" not in meta or "model" not in meta:
        raise ProtocolError(f"GET {url}: meta missing vocab_size/model")
    return meta


def remote_next_dist(
    endpoint: str,
    contexts: Sequence[Sequence[int]],
    timeout: float = DEFAULT_TIMEOUT,
) -> List[np.ndarray]:
    """One renormalized distribution per context, in request order."""
    url = endpoint.rstrip("/") + "/v1/distribution"
    payload = {"contexts": [[int(t) for t in ctx] for ctx in contexts]}
    data = _post_json(url, payload, timeout)
    if "vocab_size" not in data or "logprobs" not in data:
        raise ProtocolError(f"POST {url}: missing vocab_size/logprobs")
    V = int(data["vocab_size"])
    rows = data["logprobs"]
    if not isinstance(rows, list) or len(rows) != len(contexts):
        raise ProtocolError(
            f"POST {url}: expected {len(contexts)} logprob rows, got {len(rows)}"
        )
    out = []
    for lp in rows:
        if len(lp) != V:
            raise VocabMismatch(f"logprob row has {len(lp)} entries, meta says {V}")
        p = np.exp(np.asarray(lp, dtype=np.float64))
        s = p.sum()
        if not np.isfinite(s) or s <= 0:
            raise ProtocolError("logprob row does not exponentiate to a distribution")
        out.append(p / s)
    return out


class RemoteLM:
    """Duck-type twin of NGramLM for scoring: exposes vocab_size and
    seq_dists, so dump_cache works identically over local and remote models.
    """

    def __init__(self, endpoint: str, timeout: float = DEFAULT_TIMEOUT,
                 max_batch: int = 128):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.max_batch = max_batch
        meta = remote_meta(self.endpoint, timeout)
        self.vocab_size = int(meta["vocab_size"])
        self.name = str(meta["model"])

    def next_dist(self, context: Sequence[int]) -> np.ndarray:
        return remote_next_dist(self.endpoint, [context], self.timeout)[0]

    def dists_for_contexts(self, contexts: Sequence[Sequence[int]]) -> np.ndarray:
        rows = []
        for i in range(0, len(contexts), self.max_batch):
            rows.extend(
                remote_next_dist(
                    self.endpoint, contexts[i : i + self.max_batch], self.timeout
                )
            )
        return np.asarray(rows)

    def seq_dists(self, seq: Sequence[int]) -> np.ndarray:
        seq = list(int(t) for t in seq)
        contexts = [seq[:t] for t in range(len(seq))]
        return self.dists_for_contexts(contexts)
