"""Scikit-learn style estimator wrapping the train / bank / score pipeline."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .bank import reduce_bank
from .detect import score_series
from .train import TrainConfig, train


class PatchAnomalyDetector(BaseEstimator):
    """Patch-embedding nearest-neighbor anomaly detector.

    fit(X) trains the patch encoder on an anomaly-free series X of shape
    (n_steps, n_channels) and builds the reduced memory bank;
    anomaly_score(X) returns one non-negative score per time step, higher
    meaning more anomalous. score_samples(X) returns the negated scores to
    match the scikit-learn convention that larger is more normal.
    """

    def __init__(self, w=None, iterations=200, minibatch=512, lr0=1e-4,
                 weight_decay=1e-4, margin=0.5, max_offset=2, rand_pairs=5,
                 decay_iters=20, negative_strategy="farthest",
                 bank_ratio=0.1, k=3, seed=0):
        self.w = w
        self.iterations = iterations
        self.minibatch = minibatch
        self.lr0 = lr0
        self.weight_decay = weight_decay
        self.margin = margin
        self.max_offset = max_offset
        self.rand_pairs = rand_pairs
        self.decay_iters = decay_iters
        self.negative_strategy = negative_strategy
        self.bank_ratio = bank_ratio
        self.k = k
        self.seed = seed

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            w=self.w, iterations=self.iterations, minibatch=self.minibatch,
            lr0=self.lr0, weight_decay=self.weight_decay, margin=self.margin,
            max_offset=self.max_offset, rand_pairs=self.rand_pairs,
            decay_iters=self.decay_iters, negative_strategy=self.negative_strategy,
            seed=self.seed,
        )

    def fit(self, X, y=None):
        X = check_array(X, ensure_2d=False, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        self.model_, bank = train(X, self._train_config())
        self.bank_ = reduce_bank(bank, self.bank_ratio, seed=self.seed)
        return self

    def anomaly_score(self, X) -> np.ndarray:
        """Per-time-step anomaly scores, higher = more anomalous."""
        check_is_fitted(self, "model_")
        X = check_array(X, ensure_2d=False, dtype=np.float64)
        return score_series(self.model_, self.bank_, X, self.k).scores

    def score_samples(self, X) -> np.ndarray:
        return -self.anomaly_score(X)

    def decision_function(self, X) -> np.ndarray:
        return self.score_samples(X)
