"""Fit combination parameters on a distribution cache by minimizing the
next-token negative log-likelihood of the fused distribution.

The cached LM probabilities are constants: gradients flow only into the
combination parameters. Defaults follow the training recipe the networks
were designed around: Adam, lr 2e-3 (constant-vector 1e-2), batch 1024,
one epoch, positions shuffled across sequences.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .cache import DistCache, read_cache
from .combine import CombinationParams, combine, combine_backward, init_params
from .errors import EmptyCache
from .nn import Adam

DEFAULT_LR = 2e-3
DEFAULT_LR_CONSTANT_VECTOR = 1e-2
DEFAULT_BATCH_SIZE = 1024
PROB_FLOOR = 1e-12  # clamp inside the log so adversarial caches stay finite


def default_lr(kind: str) -> float:
    return DEFAULT_LR_CONSTANT_VECTOR if kind == "constant-vector" else DEFAULT_LR


@dataclass
class FitConfig:
    kind: str
    lr: Optional[float] = None  # None -> per-kind default
    batch_size: int = DEFAULT_BATCH_SIZE
    epochs: int = 1
    seed: int = 0
    hidden: int = 512
    mixin_cache: Optional[DistCache] = None

    def resolved_lr(self) -> float:
        return default_lr(self.kind) if self.lr is None else self.lr

    @classmethod
    def from_json(cls, path) -> "FitConfig":
        """Flat JSON file; mixin_cache holds a .pdc path when present."""
        with open(path) as fh:
            raw = json.load(fh)
        mixin = raw.pop("mixin_cache", None)
        cfg = cls(**raw)
        if mixin:
            cfg.mixin_cache = read_cache(mixin)
        return cfg


@dataclass
class FitReport:
    params: CombinationParams
    loss_trace: List[float]
    positions_seen: int
    wall_time: float
    config: FitConfig = field(repr=False, default=None)

    def to_json_dict(self) -> dict:
        return {
            "kind": self.params.kind,
            "vocab_size": self.params.vocab_size,
            "steps": len(self.loss_trace),
            "positions_seen": self.positions_seen,
            "wall_time_s": self.wall_time,
            "lr": self.config.resolved_lr() if self.config else None,
            "batch_size": self.config.batch_size if self.config else None,
            "epochs": self.config.epochs if self.config else None,
            "seed": self.config.seed if self.config else None,
            "loss_trace": self.loss_trace,
        }

    def save_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2)
            fh.write("\n")


def nll_loss(p_combined: np.ndarray, targets: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean negative log-likelihood of the targets under (B, V) rows, and
    its gradient w.r.t. the rows. Probabilities are clamped at 1e-12 inside
    the log; in the clamped region the gradient is 0."""
    p = np.asarray(p_combined, dtype=np.float64)
    t = np.asarray(targets)
    B = p.shape[0]
    rows = np.arange(B)
    pt = p[rows, t]
    loss = -np.mean(np.log(np.maximum(pt, PROB_FLOOR)))
    d = np.zeros_like(p)
    live = pt > PROB_FLOOR
    d[rows[live], t[live]] = -1.0 / (B * pt[live])
    return float(loss), d


def fit(cache: DistCache, config: FitConfig) -> FitReport:
    """Minibatch Adam over the cache positions for exactly config.epochs
    passes. Deterministic per seed. The input cache is never mutated.

    When a mixin cache is present its positions are concatenated in front of
    the primary cache's and the union is shuffled jointly, weighting every
    position equally.

    mean needs no fitting and returns immediately with an empty trace.
    A trailing batch of a single position is dropped (train-mode batchnorm
    needs two rows).
    """
    if cache.positions == 0:
        raise EmptyCache("cannot fit on an empty cache")
    t0 = time.monotonic()
    params = init_params(config.kind, cache.vocab_size, seed=config.seed,
                         hidden=config.hidden)
    if config.kind == "mean":
        return FitReport(params, [], 0, time.monotonic() - t0, config)

    if config.lr is not None and config.lr <= 0:
        raise ValueError("lr must be > 0")
    if config.batch_size < 2:
        raise ValueError("batch_size must be >= 2")
    if config.epochs < 1:
        raise ValueError("epochs must be >= 1")

    sources = [config.mixin_cache, cache] if config.mixin_cache is not None else [cache]
    p_small = np.concatenate([c.p_small for c in sources]) if len(sources) > 1 else cache.p_small
    p_large = np.concatenate([c.p_large for c in sources]) if len(sources) > 1 else cache.p_large
    targets = np.concatenate([c.targets for c in sources]) if len(sources) > 1 else cache.targets
    T = p_small.shape[0]

    rng = np.random.default_rng(config.seed)
    opt = Adam(config.resolved_lr())
    param_arrays = params.parameters()
    params.train()

    trace: List[float] = []
    seen = 0
    bs = config.batch_size
    for _ in range(config.epochs):
        order = rng.permutation(T)
        for start in range(0, T, bs):
            idx = order[start : start + bs]
            if len(idx) < 2:
                continue
            pS = p_small[idx].astype(np.float64)
            pL = p_large[idx].astype(np.float64)
            pC, cc = combine(params, pS, pL, mode="train")
            loss, d_pC = nll_loss(pC, targets[idx])
            grads = combine_backward(params, cc, d_pC)
            opt.step(param_arrays, grads)
            if params.net is not None:
                params.net.mark_updated()
            trace.append(loss)
            seen += len(idx)
    params.eval()
    return FitReport(params, trace, seen, time.monotonic() - t0, config)
