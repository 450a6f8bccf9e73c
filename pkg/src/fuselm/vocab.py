"""Shared vocabulary, tokenization, chunking and dataset splits.

Both LMs in a fusion pair must score the same token ids, so a single
Vocabulary object is built once per experiment and shared. Two modes:

* ``byte``  -- fixed alphabet of the 256 byte values (lossless on any text),
  size is always 258 including the two reserved ids.
* ``word``  -- whitespace-split words, most frequent first, ties broken by
  first occurrence in the corpus.

Ids 0 and 1 are reserved for ``<bos>`` and ``<unk>`` in both modes.
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterator, List, Sequence

import numpy as np

from .errors import EmptyCorpus, NotEnoughData

BOS_TOKEN = "<bos>"
UNK_TOKEN = "<unk>"
N_RESERVED = 2


def _byte_token(b: int) -> str:
    # printable ASCII stays literal; backslash and everything else is \xNN
    if 0x21 <= b <= 0x7E and b != 0x5C:
        return chr(b)
    return "\\x%02x" % b

_BYTE_TOKENS = [_byte_token(b) for b in range(256)]


@dataclass
class Vocabulary:
    mode: str  # "byte" | "word"
    id_to_token: List[str]
    token_to_id: dict = field(repr=False)
    bos_id: int = 0
    unk_id: int = 1

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    def __len__(self) -> int:
        return len(self.id_to_token)


def _iter_texts(corpus) -> Iterator[str]:
    if isinstance(corpus, str):
        yield corpus
    else:
        yield from corpus


def build_vocab(corpus, mode: str = "byte", max_size: int = 50000) -> Vocabulary:
    """Build a Vocabulary from a corpus (a string or an iterable of strings).

    Byte mode always yields size 258. Word mode keeps the ``max_size`` most
    frequent words (ties by first occurrence) plus the two reserved ids.
    Raises EmptyCorpus when the corpus has no tokens.
    """
    if mode not in ("byte", "word"):
        raise ValueError(f"unknown vocab mode {mode!r}")
    if max_size < 3:
        raise ValueError("max_size must be >= 3")

    if mode == "byte":
        nonempty = any(len(t.encode("utf-8")) > 0 for t in _iter_texts(corpus))
        if not nonempty:
            raise EmptyCorpus("byte vocab: corpus has no bytes")
        tokens = list(_BYTE_TOKENS)
    else:
        counts: Counter = Counter()
        first_seen: dict = {}
        pos = itertools.count()
        for text in _iter_texts(corpus):
            for w in text.split():
                if w in (BOS_TOKEN, UNK_TOKEN):
                    continue  # reserved spellings tokenize to unk
                counts[w] += 1
                if w not in first_seen:
                    first_seen[w] = next(pos)
        if not counts:
            raise EmptyCorpus("word vocab: corpus has no words")
        ranked = sorted(counts, key=lambda w: (-counts[w], first_seen[w]))
        tokens = ranked[:max_size]

    id_to_token = [BOS_TOKEN, UNK_TOKEN] + tokens
    token_to_id = {t: i for i, t in enumerate(id_to_token)}
    return Vocabulary(mode=mode, id_to_token=id_to_token, token_to_id=token_to_id)


def tokenize(text, vocab: Vocabulary) -> np.ndarray:
    """Map text to an int32 id array. Unknown words map to unk_id; byte mode
    is lossless. ``text`` may be ``bytes`` in byte mode."""
    if vocab.mode == "byte":
        raw = text if isinstance(text, bytes) else text.encode("utf-8")
        return np.frombuffer(raw, dtype=np.uint8).astype(np.int32) + N_RESERVED
    unk = vocab.unk_id
    t2i = vocab.token_to_id
    return np.fromiter(
        (t2i.get(w, unk) for w in text.split()), dtype=np.int32
    )


def detokenize(ids: Sequence[int], vocab: Vocabulary) -> str:
    if vocab.mode == "byte":
        return detokenize_bytes(ids, vocab).decode("utf-8", errors="replace")
    return " ".join(vocab.id_to_token[i] for i in ids)


def detokenize_bytes(ids: Sequence[int], vocab: Vocabulary) -> bytes:
    """Byte-mode inverse of tokenize; reserved ids are skipped."""
    if vocab.mode != "byte":
        raise ValueError("detokenize_bytes requires a byte vocabulary")
    arr = np.asarray(ids, dtype=np.int64)
    return (arr[arr >= N_RESERVED] - N_RESERVED).astype(np.uint8).tobytes()


def chunk(tokens: np.ndarray, seq_len: int) -> List[np.ndarray]:
    """Non-overlapping contiguous chunks of exactly seq_len tokens; the
    trailing remainder is dropped."""
    if seq_len < 2:
        raise ValueError("seq_len must be >= 2")
    tokens = np.asarray(tokens, dtype=np.int32)
    n = len(tokens) // seq_len
    if n == 0:
        return []
    return list(tokens[: n * seq_len].reshape(n, seq_len))


@dataclass
class DatasetSplit:
    train: List[np.ndarray]
    train_fit: List[np.ndarray]
    test: List[np.ndarray]
    seq_len: int
    seed: int


def split_fit_test(
    sequences: List[np.ndarray], n_fit: int, n_test: int, seed: int
) -> DatasetSplit:
    """Seeded uniform shuffle, then the first n_fit sequences become
    train_fit, the next n_test become test, the rest train."""
    if n_fit + n_test > len(sequences):
        raise NotEnoughData(
            f"need {n_fit}+{n_test} sequences, have {len(sequences)}"
        )
    perm = np.random.default_rng(seed).permutation(len(sequences))
    ordered = [sequences[i] for i in perm]
    seq_len = len(sequences[0]) if sequences else 0
    return DatasetSplit(
        train=ordered[n_fit + n_test :],
        train_fit=ordered[:n_fit],
        test=ordered[n_fit : n_fit + n_test],
        seq_len=seq_len,
        seed=seed,
    )


# --- persistence: one token per line, line number = id ---

def save_vocab(vocab: Vocabulary, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for tok in vocab.id_to_token:
            fh.write(tok + "\n")


def load_vocab(path) -> Vocabulary:
    with open(path, "r", encoding="utf-8") as fh:
        id_to_token = [line.rstrip("\n") for line in fh]
    if len(id_to_token) < N_RESERVED or id_to_token[:2] != [BOS_TOKEN, UNK_TOKEN]:
        raise ValueError(f"{path}: not a vocabulary file (missing reserved lines)")
    body = id_to_token[N_RESERVED:]
    mode = "byte" if body == _BYTE_TOKENS else "word"
    token_to_id = {t: i for i, t in enumerate(id_to_token)}
    return Vocabulary(mode=mode, id_to_token=id_to_token, token_to_id=token_to_id)
