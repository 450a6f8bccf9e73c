"""Per-position distribution caches (the .pdc file format).

A cache stores, for every scored position of a dataset, the small model's
and the large model's full next-token distribution plus the observed next
token. Fitting and evaluation read only the cache, never the LMs, which is
what makes the black-box setting cheap: one forward pass per model over the
fitting set, everything after that is LM-free.

Position 0 of each sequence is excluded (no in-sequence context).

File layout (little-endian): magic "PDC1", u32 vocab_size, u64 T, then T
records of (u32 target, V f32 ln p_small, V f32 ln p_large), then a u32
length-prefixed UTF-8 provenance string. Log probabilities are the stored
ground truth, so write -> read round-trips bit-exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import EmptyCache, VocabMismatch

MAGIC = b"PDC1"


@dataclass
class DistCache:
    vocab_size: int
    log_p_small: np.ndarray  # (T, V) float32, natural log
    log_p_large: np.ndarray  # (T, V) float32
    targets: np.ndarray      # (T,)  uint32
    provenance: str = ""
    _p_small: Optional[np.ndarray] = field(default=None, repr=False)
    _p_large: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def positions(self) -> int:
        return self.log_p_small.shape[0]

    def __len__(self) -> int:
        return self.positions

    @property
    def p_small(self) -> np.ndarray:
        if self._p_small is None:
            self._p_small = np.exp(self.log_p_small)
        return self._p_small

    @property
    def p_large(self) -> np.ndarray:
        if self._p_large is None:
            self._p_large = np.exp(self.log_p_large)
        return self._p_large

    def target_log_probs(self, which: str) -> np.ndarray:
        """(T,) float64 ln P(target) under 'small' or 'large'."""
        rows = np.arange(self.positions)
        logs = self.log_p_small if which == "small" else self.log_p_large
        return logs[rows, self.targets].astype(np.float64)

    @classmethod
    def from_probs(cls, p_small, p_large, targets, vocab_size=None, provenance=""):
        """Build a cache from float probability matrices (validated)."""
        p_small = np.asarray(p_small, dtype=np.float64)
        p_large = np.asarray(p_large, dtype=np.float64)
        targets = np.asarray(targets)
        if p_small.shape != p_large.shape or p_small.ndim != 2:
            raise VocabMismatch("p_small and p_large must be equal-shape (T, V)")
        V = p_small.shape[1] if vocab_size is None else int(vocab_size)
        if p_small.shape[1] != V:
            raise VocabMismatch(f"distributions have {p_small.shape[1]} entries, vocab says {V}")
        if len(targets) != p_small.shape[0]:
            raise ValueError("targets length must match number of positions")
        if np.any(targets < 0) or (len(targets) and targets.max() >= V):
            raise ValueError("target id out of range")
        for name, p in (("p_small", p_small), ("p_large", p_large)):
            if np.any(p < 0) or np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-5):
                raise ValueError(f"{name} rows are not distributions")
        with np.errstate(divide="ignore"):  # exact zeros become -inf, exp restores 0
            ls = np.log(p_small).astype(np.float32)
            ll = np.log(p_large).astype(np.float32)
        return cls(V, ls, ll, targets.astype(np.uint32), provenance)

    def concat(self, other: "DistCache") -> "DistCache":
        if self.vocab_size != other.vocab_size:
            raise VocabMismatch("cannot concatenate caches over different vocabularies")
        return DistCache(
            self.vocab_size,
            np.concatenate([self.log_p_small, other.log_p_small]),
            np.concatenate([self.log_p_large, other.log_p_large]),
            np.concatenate([self.targets, other.targets]),
            provenance=self.provenance,
        )

    def head(self, n_positions: int) -> "DistCache":
        """View-like cache of the first n positions (fit-size sweeps)."""
        n = int(n_positions)
        return DistCache(
            self.vocab_size,
            self.log_p_small[:n],
            self.log_p_large[:n],
            self.targets[:n],
            provenance=self.provenance,
        )


def dump_cache(lm_small, lm_large, sequences: Sequence, path=None, provenance="") -> DistCache:
    """Run both LMs over the sequences and cache (P_S, P_L, target) for every
    position t >= 1. Writes the .pdc file when path is given.

    LMs need only a ``vocab_size`` attribute and a ``seq_dists(seq)`` method,
    so local n-gram models and remote endpoints are interchangeable here.
    """
    if lm_small.vocab_size != lm_large.vocab_size:
        raise VocabMismatch(
            f"small model has |V|={lm_small.vocab_size}, large has |V|={lm_large.vocab_size}"
        )
    V = lm_small.vocab_size
    seqs = [np.asarray(s) for s in sequences]
    T = sum(max(len(s) - 1, 0) for s in seqs)
    if T == 0:
        raise EmptyCache("no scoreable positions (all sequences shorter than 2)")
    ls = np.empty((T, V), dtype=np.float32)
    ll = np.empty((T, V), dtype=np.float32)
    targets = np.empty(T, dtype=np.uint32)
    row = 0
    for s in seqs:
        if len(s) < 2:
            continue
        k = len(s) - 1
        with np.errstate(divide="ignore"):
            ls[row : row + k] = np.log(lm_small.seq_dists(s)[1:])
            ll[row : row + k] = np.log(lm_large.seq_dists(s)[1:])
        targets[row : row + k] = s[1:]
        row += k
    cache = DistCache(V, ls, ll, targets, provenance)
    if path is not None:
        write_cache(cache, path)
    return cache


def write_cache(cache: DistCache, path) -> None:
    V, T = cache.vocab_size, cache.positions
    rec = np.dtype([("target", "<u4"), ("ls", "<f4", (V,)), ("ll", "<f4", (V,))])
    body = np.empty(T, dtype=rec)
    body["target"] = cache.targets
    body["ls"] = cache.log_p_small
    body["ll"] = cache.log_p_large
    prov = cache.provenance.encode("utf-8")
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<IQ", V, T))
            fh.write(body.tobytes())
            fh.write(struct.pack("<I", len(prov)))
            fh.write(prov)
    except OSError as e:
        raise OSError(f"writing cache {path}: {e}") from e


def read_cache(path) -> DistCache:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as e:
        raise OSError(f"reading cache {path}: {e}") from e
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: not a distribution cache (bad magic)")
    V, T = struct.unpack_from("<IQ", data, 4)
    off = 4 + struct.calcsize("<IQ")
    rec = np.dtype([("target", "<u4"), ("ls", "<f4", (V,)), ("ll", "<f4", (V,))])
    body = np.frombuffer(data, rec, T, off)
    off += rec.itemsize * T
    (plen,) = struct.unpack_from("<I", data, off)
    off += 4
    provenance = data[off : off + plen].decode("utf-8")
    return DistCache(
        V,
        body["ls"].copy(),
        body["ll"].copy(),
        body["target"].copy(),
        provenance,
    )
