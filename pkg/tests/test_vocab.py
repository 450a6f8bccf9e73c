from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fuselm.errors import EmptyCorpus, NotEnoughData
from fuselm.vocab import (
    build_vocab,
    chunk,
    detokenize,
    detokenize_bytes,
    load_vocab,
    save_vocab,
    split_fit_test,
    tokenize,
)


class TestBuildVocab:
    def test_byte_mode_is_always_258(self):
        for corpus in ("x", "hello world", "\x00\xff" * 10):
            assert build_vocab(corpus, mode="byte").size == 258

    def test_word_mode_tiny_corpus(self):
        v = build_vocab("a b a", mode="word", max_size=10)
        assert v.size == 4
        assert set(v.id_to_token) == {"<bos>", "<unk>", "a", "b"}
        assert v.id_to_token[0] == "<bos>" and v.id_to_token[1] == "<unk>"

    def test_word_mode_truncation_prefers_frequency_then_first_seen(self):
        # brute-force frequency count on the tiny corpus as the oracle
        corpus = "d c b a e c b d d b"
        counts = Counter(corpus.split())
        first = {w: corpus.split().index(w) for w in counts}
        expected = sorted(counts, key=lambda w: (-counts[w], first[w]))[:3]
        v = build_vocab(corpus, mode="word", max_size=3)
        assert v.id_to_token[2:] == expected  # d(3), b(3, seen later), c(2)
        assert v.size == 5

    def test_empty_corpus_raises(self):
        with pytest.raises(EmptyCorpus):
            build_vocab("", mode="byte")
        with pytest.raises(EmptyCorpus):
            build_vocab("   \n  ", mode="word")

    def test_accepts_iterables(self):
        v = build_vocab(["a b", "b c"], mode="word", max_size=10)
        assert v.size == 5

    def test_deterministic(self):
        a = build_vocab("the cat sat on the mat", mode="word", max_size=4)
        b = build_vocab("the cat sat on the mat", mode="word", max_size=4)
        assert a.id_to_token == b.id_to_token


class TestTokenize:
    def test_empty_text(self):
        v = build_vocab("abc", mode="byte")
        assert len(tokenize("", v)) == 0

    def test_byte_identity_mapping(self):
        v = build_vocab("x", mode="byte")
        ids = tokenize("ab", v)
        assert list(ids) == [0x61 + 2, 0x62 + 2]

    def test_unknown_words_map_to_unk(self):
        v = build_vocab("a b", mode="word", max_size=10)
        ids = tokenize("a c b", v)
        assert list(ids) == [v.token_to_id["a"], v.unk_id, v.token_to_id["b"]]

    @settings(max_examples=100, deadline=None)
    @given(st.text(max_size=200))
    def test_byte_roundtrip_on_text(self, text):
        v = build_vocab("seed", mode="byte")
        assert detokenize(tokenize(text, v), v) == text

    @settings(max_examples=100, deadline=None)
    @given(st.binary(max_size=200))
    def test_byte_roundtrip_on_raw_bytes(self, raw):
        v = build_vocab("seed", mode="byte")
        assert detokenize_bytes(tokenize(raw, v), v) == raw


class TestChunk:
    def test_drops_trailing_remainder(self):
        out = chunk(np.arange(2050), 1024)
        assert len(out) == 2 and all(len(s) == 1024 for s in out)

    def test_exact_fit(self):
        assert len(chunk(np.arange(1024), 1024)) == 1

    def test_too_short_gives_empty(self):
        assert chunk(np.arange(1023), 1024) == []

    def test_rejects_seq_len_below_2(self):
        with pytest.raises(ValueError):
            chunk(np.arange(10), 1)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 500), st.integers(2, 64))
    def test_concatenation_is_prefix_of_input(self, n, seq_len):
        tokens = np.arange(n)
        chunks = chunk(tokens, seq_len)
        assert all(len(c) == seq_len for c in chunks)
        if chunks:
            flat = np.concatenate(chunks)
            assert np.array_equal(flat, tokens[: len(flat)])
        assert len(chunks) == n // seq_len


class TestSplit:
    def test_sizes_and_disjointness(self, rng):
        seqs = [rng.integers(0, 9, 4) for _ in range(10)]
        split = split_fit_test(seqs, 2, 3, seed=42)
        assert (len(split.train_fit), len(split.test), len(split.train)) == (2, 3, 5)
        ids = [id(s) for part in (split.train_fit, split.test, split.train) for s in part]
        assert len(set(ids)) == 10  # partition: every sequence exactly once

    def test_deterministic_per_seed(self, rng):
        seqs = [rng.integers(0, 9, 4) for _ in range(10)]
        a = split_fit_test(seqs, 2, 3, seed=42)
        b = split_fit_test(seqs, 2, 3, seed=42)
        for pa, pb in zip((a.train, a.train_fit, a.test), (b.train, b.train_fit, b.test)):
            assert all(np.array_equal(x, y) for x, y in zip(pa, pb))

    def test_seed_changes_assignment_not_sizes(self, rng):
        seqs = [rng.integers(0, 9, 4) for _ in range(30)]
        a = split_fit_test(seqs, 10, 10, seed=0)
        b = split_fit_test(seqs, 10, 10, seed=1)
        assert len(a.test) == len(b.test) == 10
        assert any(not np.array_equal(x, y) for x, y in zip(a.test, b.test))

    def test_not_enough_data(self):
        with pytest.raises(NotEnoughData):
            split_fit_test([np.arange(3)] * 4, 3, 2, seed=0)


class TestPersistence:
    def test_word_vocab_roundtrip(self, tmp_path):
        v = build_vocab("alpha beta gamma beta", mode="word", max_size=100)
        path = tmp_path / "v.txt"
        save_vocab(v, path)
        w = load_vocab(path)
        assert w.mode == "word"
        assert w.id_to_token == v.id_to_token
        assert w.token_to_id == v.token_to_id

    def test_byte_vocab_roundtrip_detects_mode(self, tmp_path):
        v = build_vocab("anything", mode="byte")
        path = tmp_path / "v.txt"
        save_vocab(v, path)
        w = load_vocab(path)
        assert w.mode == "byte" and w.size == 258
        assert detokenize(tokenize("round trip", w), w) == "round trip"

    def test_reserved_lines_first(self, tmp_path):
        v = build_vocab("a b", mode="word", max_size=5)
        path = tmp_path / "v.txt"
        save_vocab(v, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "<bos>" and lines[1] == "<unk>"

    def test_rejects_non_vocab_file(self, tmp_path):
        path = tmp_path / "junk.txt"
        path.write_text("just\nsome\nwords\n")
        with pytest.raises(ValueError):
            load_vocab(path)
