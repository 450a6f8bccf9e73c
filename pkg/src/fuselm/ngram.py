"""Interpolated add-alpha n-gram language models.

These are the desk-scale stand-ins for the expert / generalist pair: a
low-order model trained on a domain corpus plays the small expert, a
higher-order model trained on a larger mixed corpus plays the large
generalist. Count tables are flat numpy arrays grouped by packed context
key, so whole sequences can be scored vectorized.

The next-token distribution is

    P(y | ctx) = sum_k  interp[k] * (count_k(ctx, y) + alpha) / (total_k(ctx) + alpha * V)

over orders k = 1..n, where order k looks at the last k-1 context tokens
(bos-padded at sequence starts). With alpha > 0 every distribution is
strictly positive and sums to 1 exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .errors import EmptyCorpus

DEFAULT_BOS_OFFSET = 0  # bos_id defaults to the vocabulary's id 0


@dataclass
class _OrderTable:
    ctx_keys: np.ndarray  # (C,) int64, sorted unique packed contexts
    offsets: np.ndarray   # (C+1,) int64 into tokens/counts
    tokens: np.ndarray    # (nnz,) int32
    counts: np.ndarray    # (nnz,) float64
    totals: np.ndarray    # (C,) float64


class NGramLM:
    """Immutable after construction; next_dist / seq_dists are pure."""

    def __init__(self, order, vocab_size, alpha, interp, bos_id, tables, name="ngram"):
        self.order = int(order)
        self.vocab_size = int(vocab_size)
        self.alpha = float(alpha)
        self.interp = np.asarray(interp, dtype=np.float64)
        self.bos_id = int(bos_id)
        self.name = name
        self._tables: List[_OrderTable] = tables  # index k-1 holds order k
        self._base = max(self.vocab_size, self.bos_id + 1)
        if self._base ** max(self.order - 1, 1) >= 2 ** 62:
            raise ValueError("vocab_size/order too large for int64 context keys")

    # -- scoring ----------------------------------------------------------

    def next_dist(self, context: Sequence[int]) -> np.ndarray:
        """Distribution over the next token given a (possibly short) context."""
        ctx = np.asarray(context, dtype=np.int64)
        return self.dists_for_contexts([ctx])[0]

    def dists_for_contexts(self, contexts: Sequence[Sequence[int]]) -> np.ndarray:
        """(T, V) distributions, one per context, in request order."""
        n = self.order
        padded = np.full((len(contexts), max(n - 1, 1)), self.bos_id, dtype=np.int64)
        for i, ctx in enumerate(contexts):
            ctx = np.asarray(ctx, dtype=np.int64)
            if n > 1 and len(ctx) > 0:
                tail = ctx[-(n - 1):]
                padded[i, max(n - 1, 1) - len(tail):] = tail
        keys = [self._pack_last(padded, k) for k in range(1, n + 1)]
        return self._mixture(keys)

    def seq_dists(self, seq: Sequence[int]) -> np.ndarray:
        """(L, V) distributions for every position of a sequence; row t is
        the model's prediction of seq[t] from seq[:t] (bos-padded)."""
        seq = np.asarray(seq, dtype=np.int64)
        L = len(seq)
        if L == 0:
            return np.zeros((0, self.vocab_size))
        n = self.order
        padded = np.concatenate([np.full(n - 1, self.bos_id, dtype=np.int64), seq])
        keys = []
        for k in range(1, n + 1):
            if k == 1:
                keys.append(np.zeros(L, dtype=np.int64))
                continue
            win = np.lib.stride_tricks.sliding_window_view(padded, k - 1)
            win = win[n - k : n - k + L]
            kk = np.zeros(L, dtype=np.int64)
            for col in range(k - 1):
                kk = kk * self._base + win[:, col]
            keys.append(kk)
        return self._mixture(keys)

    def _pack_last(self, padded: np.ndarray, k: int) -> np.ndarray:
        # pack the last k-1 columns of an (n-1)-wide context matrix
        if k == 1:
            return np.zeros(padded.shape[0], dtype=np.int64)
        kk = np.zeros(padded.shape[0], dtype=np.int64)
        for col in range(padded.shape[1] - (k - 1), padded.shape[1]):
            kk = kk * self._base + padded[:, col]
        return kk

    def _mixture(self, keys_per_order: List[np.ndarray]) -> np.ndarray:
        T = len(keys_per_order[0])
        V = self.vocab_size
        out = np.zeros((T, V))
        for k in range(1, self.order + 1):
            w = self.interp[k - 1]
            if w == 0.0:
                continue  # exact equality with the pure lower-order model
            tab = self._tables[k - 1]
            keys = keys_per_order[k - 1]
            dense = np.zeros((T, V))
            totals = np.zeros(T)
            if len(tab.ctx_keys):
                idx = np.searchsorted(tab.ctx_keys, keys)
                idx_c = np.minimum(idx, len(tab.ctx_keys) - 1)
                found = tab.ctx_keys[idx_c] == keys
                totals[found] = tab.totals[idx_c[found]]
                starts = tab.offsets[idx_c[found]]
                lens = tab.offsets[idx_c[found] + 1] - starts
                if lens.sum():
                    rows = np.repeat(np.flatnonzero(found), lens)
                    flat = np.repeat(starts, lens) + _ragged_arange(lens)
                    dense[rows, tab.tokens[flat]] = tab.counts[flat]
            out += w * (dense + self.alpha) / (totals + self.alpha * V)[:, None]
        return out

    # -- persistence: magic "NGM1", little-endian -------------------------

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(b"NGM1")
            name_b = self.name.encode("utf-8")
            fh.write(struct.pack("<IIqd", self.order, self.vocab_size,
                                 self.bos_id, self.alpha))
            fh.write(self.interp.astype("<f8").tobytes())
            fh.write(struct.pack("<I", len(name_b)))
            fh.write(name_b)
            for tab in self._tables:
                fh.write(struct.pack("<QQ", len(tab.ctx_keys), len(tab.tokens)))
                fh.write(tab.ctx_keys.astype("<i8").tobytes())
                fh.write(tab.offsets.astype("<i8").tobytes())
                fh.write(tab.tokens.astype("<i4").tobytes())
                fh.write(tab.counts.astype("<f8").tobytes())
                fh.write(tab.totals.astype("<f8").tobytes())


def load_ngram(path) -> NGramLM:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != b"NGM1":
        raise ValueError(f"{path}: not an n-gram model file")
    off = 4
    order, vocab_size, bos_id, alpha = struct.unpack_from("<IIqd", data, off)
    off += struct.calcsize("<IIqd")
    interp = np.frombuffer(data, "<f8", order, off).copy()
    off += 8 * order
    (name_len,) = struct.unpack_from("<I", data, off)
    off += 4
    name = data[off : off + name_len].decode("utf-8")
    off += name_len
    tables = []
    for _ in range(order):
        C, nnz = struct.unpack_from("<QQ", data, off)
        off += 16
        ctx_keys = np.frombuffer(data, "<i8", C, off).copy(); off += 8 * C
        offsets = np.frombuffer(data, "<i8", C + 1, off).copy(); off += 8 * (C + 1)
        tokens = np.frombuffer(data, "<i4", nnz, off).copy(); off += 4 * nnz
        counts = np.frombuffer(data, "<f8", nnz, off).copy(); off += 8 * nnz
        totals = np.frombuffer(data, "<f8", C, off).copy(); off += 8 * C
        tables.append(_OrderTable(ctx_keys, offsets, tokens, counts, totals))
    return NGramLM(order, vocab_size, alpha, interp, bos_id, tables, name)


def ngram_train(
    sequences: Sequence[Sequence[int]],
    order: int,
    alpha: float = 1.0,
    interp: Optional[Sequence[float]] = None,
    *,
    vocab_size: int,
    bos_id: int = DEFAULT_BOS_OFFSET,
    name: str = "ngram",
) -> NGramLM:
    """Count all n-gram occurrences (orders 1..order, bos padding at
    sequence starts) and return the interpolated model.

    interp defaults to uniform weights; it must be nonnegative and sum to 1.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    if interp is None:
        interp = np.full(order, 1.0 / order)
    interp = np.asarray(interp, dtype=np.float64)
    if len(interp) != order:
        raise ValueError("interp must have one weight per order")
    if np.any(interp < 0) or abs(interp.sum() - 1.0) > 1e-9:
        raise ValueError("interp weights must be nonnegative and sum to 1")

    seqs = [np.asarray(s, dtype=np.int64) for s in sequences if len(s) > 0]
    if not seqs:
        raise EmptyCorpus("ngram_train: no tokens in corpus")
    total = sum(len(s) for s in seqs)
    if max(int(s.max()) for s in seqs) >= vocab_size:
        raise ValueError("token id out of range for vocab_size")

    base = max(vocab_size, bos_id + 1)
    if base ** max(order - 1, 1) >= 2 ** 62 // base:
        raise ValueError("vocab_size/order too large for int64 context keys")

    tables = []
    for k in range(1, order + 1):
        combined = np.empty(total, dtype=np.int64)
        pos = 0
        for s in seqs:
            L = len(s)
            if k == 1:
                keys = np.zeros(L, dtype=np.int64)
            else:
                padded = np.concatenate(
                    [np.full(k - 1, bos_id, dtype=np.int64), s]
                )
                win = np.lib.stride_tricks.sliding_window_view(padded, k - 1)[:L]
                keys = np.zeros(L, dtype=np.int64)
                for col in range(k - 1):
                    keys = keys * base + win[:, col]
            combined[pos : pos + L] = keys * base + s
            pos += L
        uniq, cnt = np.unique(combined, return_counts=True)
        keys_u = uniq // base
        tokens_u = (uniq % base).astype(np.int32)
        ctx_keys, starts, per_ctx = np.unique(
            keys_u, return_index=True, return_counts=True
        )
        offsets = np.concatenate([starts, [len(uniq)]]).astype(np.int64)
        totals = np.add.reduceat(cnt.astype(np.float64), starts)
        tables.append(
            _OrderTable(ctx_keys, offsets, tokens_u, cnt.astype(np.float64), totals)
        )
    return NGramLM(order, vocab_size, alpha, interp, bos_id, tables, name)


def _ragged_arange(lens: np.ndarray) -> np.ndarray:
    # [0..l0-1, 0..l1-1, ...] without a python loop
    ends = np.cumsum(lens)
    out = np.arange(ends[-1])
    out -= np.repeat(ends - lens, lens)
    return out
