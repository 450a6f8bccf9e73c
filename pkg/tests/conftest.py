import numpy as np
import pytest

from fuselm.cache import DistCache
from fuselm.ngram import ngram_train


def random_distributions(rng, n, vocab_size, floor=1e-4):
    """Strictly positive random probability rows."""
    x = rng.random((n, vocab_size)) + floor
    return x / x.sum(axis=1, keepdims=True)


def random_cache(rng, n, vocab_size) -> DistCache:
    pS = random_distributions(rng, n, vocab_size)
    pL = random_distributions(rng, n, vocab_size)
    targets = rng.integers(0, vocab_size, n)
    return DistCache.from_probs(pS, pL, targets)


def biased_cache(rng, n, vocab_size, p_small_target=0.9, p_large_target=0.1) -> DistCache:
    """Cache where the small model assigns the target a fixed probability
    and the rest is uniform; ditto the large model."""
    targets = rng.integers(0, vocab_size, n)
    rows = np.arange(n)
    pS = np.full((n, vocab_size), (1 - p_small_target) / (vocab_size - 1))
    pS[rows, targets] = p_small_target
    pL = np.full((n, vocab_size), (1 - p_large_target) / (vocab_size - 1))
    pL[rows, targets] = p_large_target
    return DistCache.from_probs(pS, pL, targets)


def fd_check(loss_fn, param_arrays, analytic_grads, rng, n_samples=6, h=1e-5,
             floor=1e-4, max_skip_frac=0.2):
    """Worst relative error between analytic gradients and central finite
    differences, probing every entry of small tensors and a seeded random
    sample of entries of large ones. loss_fn re-evaluates the loss from the
    (mutated-in-place) parameters; it may return a bare loss or a
    (loss, region_fingerprint) pair, where the fingerprint identifies the
    piecewise-linear region (e.g. packed relu masks).

    Central differences are only a valid oracle where the loss is smooth on
    the stencil, which fails whenever one of the thousands of relu units in
    a 512-wide stack has a pre-activation inside the step's reach. A probe
    is therefore skipped when the region fingerprints at the two stencil
    endpoints differ, or when the h and h/4 estimates disagree. Skips are
    capped at max_skip_frac of all probes so filtering can never hide a
    broken gradient."""
    worst = 0.0
    checked = skipped = 0

    def evaluate(flat, i, orig, step):
        flat[i] = orig + step
        up = loss_fn()
        flat[i] = orig - step
        down = loss_fn()
        flat[i] = orig
        up, fp_up = up if isinstance(up, tuple) else (up, None)
        down, fp_down = down if isinstance(down, tuple) else (down, None)
        return (up - down) / (2.0 * step), fp_up == fp_down

    for name, arr in param_arrays.items():
        flat = arr.reshape(-1)
        if flat.size <= n_samples:
            idxs = np.arange(flat.size)
        else:
            idxs = rng.choice(flat.size, size=n_samples, replace=False)
        ga_flat = np.asarray(analytic_grads[name]).reshape(-1)
        for i in idxs:
            orig = flat[i]
            fd1, smooth1 = evaluate(flat, i, orig, h)
            fd2, smooth2 = evaluate(flat, i, orig, h / 4.0)
            if not (smooth1 and smooth2) or (
                abs(fd1 - fd2) > 0.05 * max(abs(fd1), abs(fd2), floor)
            ):
                skipped += 1
                continue
            err = abs(ga_flat[i] - fd2) / max(abs(ga_flat[i]), abs(fd2), floor)
            worst = max(worst, err)
            checked += 1
    if skipped > max_skip_frac * (checked + skipped):
        raise AssertionError(
            f"finite differences unreliable at {skipped}/{checked + skipped} probes"
        )
    return worst


def relu_fingerprint(net, cache) -> bytes:
    """Packed relu masks from a forward cache: identifies the active
    piecewise-linear region."""
    parts = []
    for layer, ctx in zip(net.layers, cache.ctxs):
        if layer.kind == "relu":
            parts.append(np.packbits(ctx[0]).tobytes())
    return b"".join(parts)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def toy_bigram():
    # corpus [a, b, a, b] over vocab {a: 0, b: 1}, bos kept outside the vocab
    return ngram_train(
        [np.array([0, 1, 0, 1])], order=2, alpha=1.0, interp=[0.0, 1.0],
        vocab_size=2, bos_id=2,
    )


@pytest.fixture
def small_lms(rng):
    """A pair of distinct n-gram models over a shared 50-token vocabulary."""
    seqs = [rng.integers(0, 50, 60) for _ in range(8)]
    small = ngram_train(seqs[:4], order=2, alpha=0.5, vocab_size=50, bos_id=0, name="small")
    large = ngram_train(seqs, order=3, alpha=0.5, vocab_size=50, bos_id=0, name="large")
    return small, large
