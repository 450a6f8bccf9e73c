import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from conftest import random_distributions
from fuselm.errors import ShapeError
from fuselm.estimator import DistributionCombiner, check_paired_distributions, check_targets
from fuselm.evaluate import combined_perplexity
from fuselm.cache import DistCache


@pytest.fixture
def Xy(rng):
    pS = random_distributions(rng, 400, 6)
    pL = random_distributions(rng, 400, 6)
    y = rng.integers(0, 6, 400)
    return np.hstack([pS, pL]), y


class TestValidation:
    def test_splits_halves(self, rng):
        pS = random_distributions(rng, 5, 4)
        pL = random_distributions(rng, 5, 4)
        a, b = check_paired_distributions(np.hstack([pS, pL]))
        assert np.array_equal(a, pS) and np.array_equal(b, pL)

    def test_accepts_tuple(self, rng):
        pS = random_distributions(rng, 5, 4)
        pL = random_distributions(rng, 5, 4)
        a, b = check_paired_distributions((pS, pL))
        assert np.array_equal(a, pS) and np.array_equal(b, pL)

    def test_rejects_odd_width(self, rng):
        with pytest.raises(ShapeError):
            check_paired_distributions(rng.random((3, 7)))

    def test_rejects_negative_and_unnormalized(self, rng):
        pS = random_distributions(rng, 3, 4)
        bad = pS.copy()
        bad[0, 0] = -0.1
        with pytest.raises(ValueError):
            check_paired_distributions(np.hstack([bad, pS]))
        bad2 = pS * 2
        with pytest.raises(ValueError):
            check_paired_distributions(np.hstack([pS, bad2]))

    def test_targets_bounds(self):
        with pytest.raises(ValueError):
            check_targets(np.array([0, 5]), 2, 5)
        with pytest.raises(ShapeError):
            check_targets(np.array([0, 1, 2]), 2, 5)


class TestSklearnContract:
    def test_get_params_roundtrip(self):
        est = DistributionCombiner(kind="full-scalar", learning_rate=0.01,
                                   batch_size=64, n_epochs=3, hidden_dim=16,
                                   random_state=7)
        params = est.get_params()
        assert params["kind"] == "full-scalar"
        est2 = DistributionCombiner(**params)
        assert est2.get_params() == params

    def test_clone_preserves_hyperparams(self):
        est = DistributionCombiner(kind="constant-vector", n_epochs=2)
        c = clone(est)
        assert c.get_params() == est.get_params()

    def test_set_params_chains(self):
        est = DistributionCombiner().set_params(kind="mean", batch_size=32)
        assert est.kind == "mean" and est.batch_size == 32

    def test_not_fitted_error(self, Xy):
        X, y = Xy
        with pytest.raises(NotFittedError):
            DistributionCombiner().predict_proba(X)
        with pytest.raises(NotFittedError):
            DistributionCombiner().combination_weight(X)

    def test_fit_returns_self_and_sets_attributes(self, Xy):
        X, y = Xy
        est = DistributionCombiner(kind="constant-scalar", n_epochs=2, batch_size=128)
        assert est.fit(X, y) is est
        assert est.vocab_size_ == 6
        assert est.n_features_in_ == 12
        assert est.report_.positions_seen > 0


class TestBehavior:
    def test_predict_proba_rows_are_distributions(self, Xy):
        X, y = Xy
        est = DistributionCombiner(kind="entropy-vector", hidden_dim=8,
                                   n_epochs=1, batch_size=64).fit(X, y)
        proba = est.predict_proba(X)
        assert proba.shape == (400, 6)
        assert np.all(proba >= 0)
        assert np.abs(proba.sum(axis=1) - 1).max() < 1e-6

    def test_tuple_and_matrix_inputs_agree(self, Xy, rng):
        X, y = Xy
        est = DistributionCombiner(kind="constant-scalar", n_epochs=2,
                                   batch_size=64).fit(X, y)
        V = est.vocab_size_
        assert np.array_equal(est.predict_proba(X),
                              est.predict_proba((X[:, :V], X[:, V:])))

    def test_score_is_mean_log_likelihood(self, Xy):
        X, y = Xy
        est = DistributionCombiner(kind="mean").fit(X, y)
        proba = est.predict_proba(X)
        expected = np.mean(np.log(proba[np.arange(len(y)), y]))
        assert est.score(X, y) == pytest.approx(expected, rel=1e-12)
        assert est.perplexity(X, y) == pytest.approx(np.exp(-expected), rel=1e-12)

    def test_perplexity_matches_evaluate_module(self, Xy):
        X, y = Xy
        est = DistributionCombiner(kind="constant-scalar", n_epochs=3,
                                   batch_size=128, random_state=1).fit(X, y)
        V = est.vocab_size_
        cache = DistCache.from_probs(X[:, :V], X[:, V:], y)
        assert est.perplexity(X, y) == pytest.approx(
            combined_perplexity(cache, est.params_).perplexity, rel=1e-4
        )

    def test_combination_weight_shapes(self, Xy):
        X, y = Xy
        scalar = DistributionCombiner(kind="constant-scalar", n_epochs=1,
                                      batch_size=64).fit(X, y)
        assert scalar.combination_weight(X).shape == (400,)
        vector = DistributionCombiner(kind="constant-vector", n_epochs=1,
                                      batch_size=64).fit(X, y)
        assert vector.combination_weight(X).shape == (400, 6)

    def test_random_state_reproducibility(self, Xy):
        X, y = Xy
        a = DistributionCombiner(kind="entropy-scalar", hidden_dim=8, n_epochs=1,
                                 batch_size=64, random_state=3).fit(X, y)
        b = DistributionCombiner(kind="entropy-scalar", hidden_dim=8, n_epochs=1,
                                 batch_size=64, random_state=3).fit(X, y)
        assert np.array_equal(a.predict_proba(X), b.predict_proba(X))
