import numpy as np
import pytest

from fuselm.errors import EmptyCorpus
from fuselm.ngram import load_ngram, ngram_train


def brute_force_dist(sequences, order, alpha, interp, vocab_size, bos_id, context):
    """Independent oracle: dict-of-Counters n-gram estimator."""
    from collections import Counter, defaultdict

    tables = [defaultdict(Counter) for _ in range(order)]
    for seq in sequences:
        seq = list(seq)
        padded = [bos_id] * (order - 1) + seq
        for i, tok in enumerate(seq):
            for k in range(1, order + 1):
                ctx = tuple(padded[i + order - k : i + order - 1])
                tables[k - 1][ctx][tok] += 1
    context = list(context)
    out = np.zeros(vocab_size)
    for k in range(1, order + 1):
        ctx = tuple(([bos_id] * order + context)[len(context) + order - k + 1 :]) if k > 1 else ()
        counter = tables[k - 1][ctx]
        total = sum(counter.values())
        for y in range(vocab_size):
            out[y] += interp[k - 1] * (counter[y] + alpha) / (total + alpha * vocab_size)
    return out


class TestTraining:
    def test_hand_counted_bigram(self, toy_bigram):
        # corpus [a,b,a,b]: context a is followed by b twice and a never,
        # so with alpha=1 over |V|=2: P(a|a)=(0+1)/(2+2), P(b|a)=(2+1)/(2+2)
        d = toy_bigram.next_dist([0])
        assert d == pytest.approx([0.25, 0.75], abs=1e-12)

    def test_unigram_ignores_context(self, rng):
        lm = ngram_train([rng.integers(0, 6, 30)], order=1, alpha=0.3, vocab_size=6)
        a = lm.next_dist([])
        b = lm.next_dist([3, 4, 5])
        assert np.array_equal(a, b)

    def test_large_alpha_approaches_uniform(self, rng):
        seqs = [rng.integers(0, 4, 20)]
        lm = ngram_train(seqs, order=2, alpha=1e9, vocab_size=4, bos_id=4)
        assert lm.next_dist([1]) == pytest.approx(np.full(4, 0.25), abs=1e-6)

    def test_empty_corpus(self):
        with pytest.raises(EmptyCorpus):
            ngram_train([], order=2, vocab_size=4)
        with pytest.raises(EmptyCorpus):
            ngram_train([np.array([], dtype=np.int64)], order=2, vocab_size=4)

    def test_invalid_interp_rejected(self, rng):
        seqs = [rng.integers(0, 4, 10)]
        with pytest.raises(ValueError):
            ngram_train(seqs, order=2, interp=[0.5, 0.6], vocab_size=4)
        with pytest.raises(ValueError):
            ngram_train(seqs, order=2, interp=[1.2, -0.2], vocab_size=4)


class TestNextDist:
    def test_matches_brute_force(self, rng):
        seqs = [rng.integers(0, 7, 25) for _ in range(3)]
        interp = [0.2, 0.3, 0.5]
        lm = ngram_train(seqs, order=3, alpha=0.4, interp=interp, vocab_size=7, bos_id=7)
        for ctx in ([], [2], [3, 1], [0, 1, 2, 3, 4]):
            expected = brute_force_dist(seqs, 3, 0.4, interp, 7, 7, ctx)
            assert lm.next_dist(ctx) == pytest.approx(expected, abs=1e-12)

    def test_sums_to_one_and_strictly_positive(self, rng):
        seqs = [rng.integers(0, 11, 40) for _ in range(2)]
        lm = ngram_train(seqs, order=4, alpha=0.05, vocab_size=11, bos_id=11)
        for ctx in ([], [1, 2, 3], list(rng.integers(0, 11, 9))):
            d = lm.next_dist(ctx)
            assert abs(d.sum() - 1.0) < 1e-9
            assert np.all(d > 0)

    def test_unseen_context_single_order_is_uniform(self, rng):
        lm = ngram_train([np.array([0, 1, 2])], order=2, alpha=0.7,
                         interp=[0.0, 1.0], vocab_size=5, bos_id=5)
        assert lm.next_dist([4]) == pytest.approx(np.full(5, 0.2), abs=1e-12)

    def test_purity(self, toy_bigram):
        a = toy_bigram.next_dist([0])
        b = toy_bigram.next_dist([0])
        assert np.array_equal(a, b)

    def test_one_hot_interp_equals_pure_lower_order(self, rng):
        seqs = [rng.integers(0, 6, 50) for _ in range(2)]
        big = ngram_train(seqs, order=4, alpha=0.3, interp=[0, 0, 1, 0],
                          vocab_size=6, bos_id=6)
        pure = ngram_train(seqs, order=3, alpha=0.3, interp=[0, 0, 1],
                           vocab_size=6, bos_id=6)
        ctxs = [list(rng.integers(0, 6, n)) for n in (0, 1, 2, 3, 8)]
        for ctx in ctxs:
            assert np.array_equal(big.next_dist(ctx), pure.next_dist(ctx))


class TestSeqDists:
    def test_consistent_with_next_dist(self, rng):
        seqs = [rng.integers(0, 8, 30) for _ in range(2)]
        lm = ngram_train(seqs, order=3, alpha=0.2, vocab_size=8, bos_id=8)
        s = rng.integers(0, 8, 12)
        rows = lm.seq_dists(s)
        assert rows.shape == (12, 8)
        for t in range(12):
            assert rows[t] == pytest.approx(lm.next_dist(s[:t]), abs=1e-12)

    def test_batch_contexts_preserve_order(self, rng):
        seqs = [rng.integers(0, 8, 30)]
        lm = ngram_train(seqs, order=2, alpha=0.2, vocab_size=8, bos_id=8)
        ctxs = [[1], [5], []]
        batch = lm.dists_for_contexts(ctxs)
        for i, ctx in enumerate(ctxs):
            assert np.array_equal(batch[i], lm.next_dist(ctx))


class TestPersistence:
    def test_save_load_exact(self, rng, tmp_path):
        seqs = [rng.integers(0, 9, 40) for _ in range(3)]
        lm = ngram_train(seqs, order=3, alpha=0.9, interp=[0.1, 0.4, 0.5],
                         vocab_size=9, bos_id=9, name="roundtrip")
        path = tmp_path / "m.ngm"
        lm.save(path)
        back = load_ngram(path)
        assert back.name == "roundtrip"
        assert back.order == 3 and back.vocab_size == 9 and back.bos_id == 9
        s = rng.integers(0, 9, 17)
        assert np.array_equal(lm.seq_dists(s), back.seq_dists(s))

    def test_saves_are_byte_identical(self, rng, tmp_path):
        seqs = [rng.integers(0, 9, 40)]
        lm = ngram_train(seqs, order=2, vocab_size=9, bos_id=9)
        a, b = tmp_path / "a.ngm", tmp_path / "b.ngm"
        lm.save(a)
        lm.save(b)
        assert a.read_bytes() == b.read_bytes()

    def test_rejects_wrong_magic(self, tmp_path):
        p = tmp_path / "x.ngm"
        p.write_bytes(b"NOPE" + b"\0" * 40)
        with pytest.raises(ValueError):
            load_ngram(p)
