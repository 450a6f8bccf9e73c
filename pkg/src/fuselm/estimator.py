"""sklearn-style estimator over the combination machinery.

X is the paired-distribution matrix: each row is the concatenation of the
small model's and the large model's next-token distribution at one position,
shape (n_positions, 2 * vocab_size). y holds the observed next-token ids.
This is exactly the layout the full-* networks consume, and it lets the
combiner ride sklearn plumbing (clone, get_params, pipelines operating on
precomputed caches).
"""

from __future__ import annotations

from typing import Optional, Tuple

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .cache import DistCache
from .combine import combine, lambda_of
from .errors import ShapeError
from .fitting import FitConfig, fit

EVAL_BATCH = 4096


def check_paired_distributions(X, tol: float = 1e-4) -> Tuple[np.ndarray, np.ndarray]:
    """Split (n, 2V) rows into the (p_small, p_large) halves and validate
    that both halves are probability rows. Also accepts an (pS, pL) tuple."""
    if isinstance(X, (tuple, list)) and len(X) == 2:
        pS = np.asarray(X[0], dtype=np.float64)
        pL = np.asarray(X[1], dtype=np.float64)
    else:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] % 2:
            raise ShapeError(f"X must be (n, 2*V), got shape {getattr(X, 'shape', None)}")
        V = X.shape[1] // 2
        pS, pL = X[:, :V], X[:, V:]
    if pS.shape != pL.shape or pS.ndim != 2:
        raise ShapeError("the two distribution blocks must be equal-shape 2-D arrays")
    for name, p in (("small", pS), ("large", pL)):
        if np.any(p < 0):
            raise ValueError(f"{name}-model block has negative entries")
        bad = np.abs(p.sum(axis=1) - 1.0) > tol
        if np.any(bad):
            raise ValueError(
                f"{name}-model block rows do not sum to 1 (first bad row {int(np.flatnonzero(bad)[0])})"
            )
    return pS, pL


def check_targets(y, n_rows: int, vocab_size: int) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1 or len(y) != n_rows:
        raise ShapeError(f"y must be a ({n_rows},) id array")
    if np.any(y < 0) or (len(y) and int(y.max()) >= vocab_size):
        raise ValueError("target id out of range for the vocabulary")
    return y.astype(np.uint32)


class DistributionCombiner(BaseEstimator):
    """Learns how to fuse two next-token distributions into one.

    Parameters
    ----------
    kind : one of mean, constant-scalar, constant-vector, entropy-scalar,
        entropy-vector, full-scalar, full-vector.
    learning_rate : Adam step size; None picks the per-kind default
        (2e-3, or 1e-2 for constant-vector).
    batch_size : positions per optimizer step.
    n_epochs : passes over the fitting positions.
    hidden_dim : width of the two hidden layers of the network kinds.
    random_state : seed for parameter init and position shuffling.

    Attributes (after fit)
    ----------------------
    params_ : fitted CombinationParams (eval mode).
    report_ : FitReport with the per-step loss trace.
    vocab_size_, n_features_in_ : inferred from X.
    """

    def __init__(
        self,
        kind: str = "entropy-scalar",
        learning_rate: Optional[float] = None,
        batch_size: int = 1024,
        n_epochs: int = 1,
        hidden_dim: int = 512,
        random_state: int = 0,
    ):
        self.kind = kind
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.n_epochs = n_epochs
        self.hidden_dim = hidden_dim
        self.random_state = random_state

    def _require_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("call fit before using this estimator")

    def fit(self, X, y) -> "DistributionCombiner":
        pS, pL = check_paired_distributions(X)
        targets = check_targets(y, pS.shape[0], pS.shape[1])
        cache = DistCache.from_probs(pS, pL, targets)
        config = FitConfig(
            kind=self.kind,
            lr=self.learning_rate,
            batch_size=self.batch_size,
            epochs=self.n_epochs,
            seed=self.random_state,
            hidden=self.hidden_dim,
        )
        self.report_ = fit(cache, config)
        self.params_ = self.report_.params
        self.vocab_size_ = pS.shape[1]
        self.n_features_in_ = 2 * pS.shape[1]
        return self

    def predict_proba(self, X) -> np.ndarray:
        """(n, V) fused distributions, eval mode."""
        self._require_fitted()
        pS, pL = check_paired_distributions(X)
        out = np.empty_like(pS)
        for i in range(0, pS.shape[0], EVAL_BATCH):
            out[i : i + EVAL_BATCH] = combine(
                self.params_, pS[i : i + EVAL_BATCH], pL[i : i + EVAL_BATCH]
            )
        return out

    def combination_weight(self, X) -> np.ndarray:
        """Per-row weight on the small model's distribution."""
        self._require_fitted()
        pS, pL = check_paired_distributions(X)
        return lambda_of(self.params_, pS, pL)

    def score(self, X, y) -> float:
        """Mean log-likelihood of the targets (greater is better)."""
        pS, pL = check_paired_distributions(X)
        y = check_targets(y, pS.shape[0], pS.shape[1])
        proba = self.predict_proba((pS, pL))
        rows = np.arange(len(y))
        return float(np.mean(np.log(np.maximum(proba[rows, y], 1e-300))))

    def perplexity(self, X, y) -> float:
        """exp of the mean negative log-likelihood (lower is better)."""
        return float(np.exp(-self.score(X, y)))
