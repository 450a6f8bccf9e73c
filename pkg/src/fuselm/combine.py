"""The seven combination functions mapping a (small, large) distribution
pair to one fused distribution.

Kinds, in increasing capacity:

* ``mean``             -- (pS + pL) / 2, no parameters.
* ``constant-scalar``  -- lam * pS + (1 - lam) * pL, one learned scalar.
* ``constant-vector``  -- token-wise weights, renormalized.
* ``entropy-scalar``   -- lam predicted by a net from the two entropies.
* ``entropy-vector``   -- token-wise weights predicted from the entropies.
* ``full-scalar``      -- lam predicted from the concatenated distributions.
* ``full-vector``      -- token-wise weights predicted from the same input.

The weight lam is always the weight on the SMALL model's distribution;
every learned weight passes through a sigmoid so it lives in (0, 1).
Token-wise combinations are only proportional to the weighted sum, so they
divide by Z = sum_v(lam_v * pS_v + (1 - lam_v) * pL_v).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Dict, Optional, Tuple, Union

import numpy as np

from .errors import DegenerateRenormalization, NoLambda, ShapeError, VocabMismatch
from .nn import FeedForwardNet, ForwardCache, entropy_net, full_net, net_from_bytes, sigmoid

KINDS = (
    "mean",
    "constant-scalar",
    "constant-vector",
    "entropy-scalar",
    "entropy-vector",
    "full-scalar",
    "full-vector",
)
CONSTANT_KINDS = frozenset({"constant-scalar", "constant-vector"})
NET_KINDS = frozenset({"entropy-scalar", "entropy-vector", "full-scalar", "full-vector"})
SCALAR_KINDS = frozenset({"constant-scalar", "entropy-scalar", "full-scalar"})
VECTOR_KINDS = frozenset({"constant-vector", "entropy-vector", "full-vector"})
ENTROPY_KINDS = frozenset({"entropy-scalar", "entropy-vector"})

MIN_RENORM = 1e-12


def entropy(d: np.ndarray) -> float:
    """Shannon entropy in nats, with 0 * ln 0 = 0."""
    return float(entropy_rows(np.asarray(d, dtype=np.float64)[None, :])[0])


def entropy_rows(p: np.ndarray) -> np.ndarray:
    """(B,) entropies of (B, V) distribution rows."""
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(p > 0, p * np.log(p), 0.0)
    return -plogp.sum(axis=1)


@dataclass
class CombinationParams:
    """Kind tag plus whichever parameter container the kind uses: a raw
    (pre-sigmoid) scalar/vector for constant kinds, a network for the
    entropy/full kinds, neither for mean."""

    kind: str
    vocab_size: int
    raw_lambda: Optional[np.ndarray] = None
    net: Optional[FeedForwardNet] = None

    def train(self) -> "CombinationParams":
        if self.net is not None:
            self.net.train()
        return self

    def eval(self) -> "CombinationParams":
        if self.net is not None:
            self.net.eval()
        return self

    def parameters(self) -> Dict[str, np.ndarray]:
        if self.kind in CONSTANT_KINDS:
            return {"raw_lambda": self.raw_lambda}
        if self.net is not None:
            return self.net.parameters()
        return {}


def init_params(kind: str, vocab_size: int, seed: int = 0, hidden: int = 512) -> CombinationParams:
    """Fresh parameters; constant kinds start at lam = 0.5 exactly, net
    kinds near it (zero final bias, symmetric weight init)."""
    if kind not in KINDS:
        raise ValueError(f"unknown combination kind {kind!r}")
    V = int(vocab_size)
    if kind == "mean":
        return CombinationParams(kind, V)
    if kind == "constant-scalar":
        return CombinationParams(kind, V, raw_lambda=np.zeros(()))
    if kind == "constant-vector":
        return CombinationParams(kind, V, raw_lambda=np.zeros(V))
    out_dim = 1 if kind in SCALAR_KINDS else V
    if kind in ENTROPY_KINDS:
        net = entropy_net(out_dim, hidden=hidden, seed=seed)
    else:
        net = full_net(V, out_dim, hidden=hidden, seed=seed)
    return CombinationParams(kind, V, net=net.eval())


@dataclass
class CombineCache:
    """Everything combine_backward needs; only produced in train mode."""

    lam: np.ndarray            # (B, 1) or (B, V) effective weights
    diff: np.ndarray           # pS - pL
    pC: np.ndarray
    Z: Optional[np.ndarray]    # (B,) renormalizers, vector kinds only
    net_cache: Optional[ForwardCache]


def _as_batch(p) -> Tuple[np.ndarray, bool]:
    arr = np.asarray(p, dtype=np.float64)
    if arr.ndim == 1:
        return arr[None, :], True
    if arr.ndim != 2:
        raise ShapeError(f"distributions must be 1-D or 2-D, got shape {arr.shape}")
    return arr, False


def _check_pair(params: CombinationParams, pS, pL) -> Tuple[np.ndarray, np.ndarray, bool]:
    pS, squeezed_s = _as_batch(pS)
    pL, squeezed_l = _as_batch(pL)
    if pS.shape != pL.shape:
        raise VocabMismatch(f"distribution shapes differ: {pS.shape} vs {pL.shape}")
    if pS.shape[1] != params.vocab_size:
        raise VocabMismatch(
            f"distributions have {pS.shape[1]} entries, params expect {params.vocab_size}"
        )
    return pS, pL, squeezed_s and squeezed_l


def _net_features(kind: str, pS: np.ndarray, pL: np.ndarray) -> np.ndarray:
    if kind in ENTROPY_KINDS:
        return np.stack([entropy_rows(pS), entropy_rows(pL)], axis=1)
    return np.concatenate([pS, pL], axis=1)


def _effective_lambda(params, pS, pL, train: bool):
    """(lam as (B,1) or (B,V), net forward cache or None)."""
    kind = params.kind
    B = pS.shape[0]
    if kind == "constant-scalar":
        return np.broadcast_to(sigmoid(params.raw_lambda)[None, None], (B, 1)), None
    if kind == "constant-vector":
        return np.broadcast_to(sigmoid(params.raw_lambda)[None, :], pS.shape), None
    feats = _net_features(kind, pS, pL)
    if train:
        lam, net_cache = params.net.forward_train(feats)
        return lam, net_cache
    return params.net.forward(feats), None


def _renormalize(u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    Z = u.sum(axis=1)
    if np.any(Z < MIN_RENORM):
        raise DegenerateRenormalization(
            "token-wise combination summed to ~0; inputs are not distributions"
        )
    return u / Z[:, None], Z


def combine(
    params: CombinationParams,
    p_small,
    p_large,
    mode: str = "eval",
) -> Union[np.ndarray, Tuple[np.ndarray, CombineCache]]:
    """Fused distribution(s). In train mode returns (pC, cache) and the
    network (if any) must be in train mode; eval mode returns pC alone.

    Accepts single (V,) distributions or (B, V) batches.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    train = mode == "train"
    if not train:
        params.eval()  # single rows must always score via running stats
    pS, pL, squeeze = _check_pair(params, p_small, p_large)
    kind = params.kind

    if kind == "mean":
        pC = 0.5 * (pS + pL)
        cache = CombineCache(np.full((pS.shape[0], 1), 0.5), pS - pL, pC, None, None)
    else:
        lam, net_cache = _effective_lambda(params, pS, pL, train)
        if kind in SCALAR_KINDS:
            u = lam * pS + (1.0 - lam) * pL
            pC, Z = u, None
        else:
            u = lam * pS + (1.0 - lam) * pL
            pC, Z = _renormalize(u)
        cache = CombineCache(lam, pS - pL, pC, Z, net_cache)

    if squeeze:
        pC = pC[0]
    return (pC, cache) if train else pC


def combine_backward(
    params: CombinationParams, cache: CombineCache, d_pC: np.ndarray
) -> Dict[str, np.ndarray]:
    """Gradients of a scalar loss w.r.t. the combination parameters, given
    dLoss/dpC. Cached LM probabilities are constants: nothing flows into
    them, only into raw_lambda or the network."""
    kind = params.kind
    if kind == "mean":
        return {}
    d_pC = np.asarray(d_pC, dtype=np.float64)
    if d_pC.ndim == 1:
        d_pC = d_pC[None, :]
    if kind in SCALAR_KINDS:
        # pC = lam * pS + (1 - lam) * pL, lam per row
        d_lam = (d_pC * cache.diff).sum(axis=1, keepdims=True)  # (B, 1)
    else:
        # pC = u / Z with u = lam.pS + (1-lam).pL
        du = (d_pC - (d_pC * cache.pC).sum(axis=1, keepdims=True)) / cache.Z[:, None]
        d_lam = du * cache.diff  # (B, V)

    if kind in CONSTANT_KINDS:
        lam = cache.lam[0] if kind == "constant-scalar" else cache.lam[0, :]
        d_raw = (d_lam.sum() if kind == "constant-scalar" else d_lam.sum(axis=0)) * lam * (1.0 - lam)
        return {"raw_lambda": np.asarray(d_raw).reshape(params.raw_lambda.shape)}
    grads, _ = params.net.backward(cache.net_cache, d_lam)
    return grads


def lambda_of(params: CombinationParams, p_small, p_large):
    """The weight combine puts on the small model: a scalar (scalar kinds)
    or a |V| vector (vector kinds); batched inputs get one per row."""
    if params.kind == "mean":
        raise NoLambda("mean has no combination weight")
    pS, pL, squeeze = _check_pair(params, p_small, p_large)
    if params.kind == "constant-scalar":
        lam = np.broadcast_to(sigmoid(params.raw_lambda), (pS.shape[0],))
    elif params.kind == "constant-vector":
        lam = np.broadcast_to(sigmoid(params.raw_lambda)[None, :], pS.shape)
    else:
        was_training = params.net.mode == "train"
        params.net.eval()
        try:
            out = params.net.forward(_net_features(params.kind, pS, pL))
        finally:
            if was_training:
                params.net.train()
        lam = out[:, 0] if params.kind in SCALAR_KINDS else out
    if squeeze:
        return float(lam[0]) if params.kind in SCALAR_KINDS else np.array(lam[0])
    return np.array(lam)


# -- checkpoint: magic "CMB1", little-endian -------------------------------

_KIND_TAGS = {k: i for i, k in enumerate(KINDS)}
_TAG_KINDS = {i: k for k, i in _KIND_TAGS.items()}


def save_params(params: CombinationParams, path) -> None:
    with open(path, "wb") as fh:
        fh.write(b"CMB1")
        fh.write(struct.pack("<BI", _KIND_TAGS[params.kind], params.vocab_size))
        if params.kind in CONSTANT_KINDS:
            raw = np.atleast_1d(params.raw_lambda)
            fh.write(struct.pack("<I", raw.size))
            fh.write(raw.astype("<f4").tobytes())
        elif params.kind in NET_KINDS:
            blob = params.net.to_bytes()
            fh.write(struct.pack("<Q", len(blob)))
            fh.write(blob)


def load_params(path) -> CombinationParams:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != b"CMB1":
        raise ValueError(f"{path}: not a combination checkpoint (bad magic)")
    tag, vocab_size = struct.unpack_from("<BI", data, 4)
    off = 4 + struct.calcsize("<BI")
    kind = _TAG_KINDS.get(tag)
    if kind is None:
        raise ValueError(f"{path}: unknown kind tag {tag}")
    if kind == "mean":
        return CombinationParams(kind, vocab_size)
    if kind in CONSTANT_KINDS:
        (n,) = struct.unpack_from("<I", data, off)
        off += 4
        raw = np.frombuffer(data, "<f4", n, off).astype(np.float64)
        if kind == "constant-scalar":
            return CombinationParams(kind, vocab_size, raw_lambda=np.array(raw[0]))
        return CombinationParams(kind, vocab_size, raw_lambda=raw)
    (blob_len,) = struct.unpack_from("<Q", data, off)
    off += 8
    net, _ = net_from_bytes(data, off)
    return CombinationParams(kind, vocab_size, net=net)
