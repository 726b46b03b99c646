"""Shared regressor contract."""

from __future__ import annotations

import numpy as np

from ..errors import NotFittedError, SchemaMismatch


class Regressor:
    """Uniform fit/predict interface for the model zoo.

    Subclasses implement ``_fit`` and ``_predict`` and declare ``kind``.
    ``loss_trace`` is filled by iterative learners with one training-loss
    value per epoch (or coordinate sweep).
    """

    kind = "base"

    def __init__(self, **hyperparameters):
        self.hyperparameters = hyperparameters
        self.n_features_ = None
        self.loss_trace: list[float] = []

    def __repr__(self):
        params = ", ".join(f"{k}={v!r}" for k, v in sorted(self.hyperparameters.items()))
        return f"{type(self).__name__}({params})"

    @property
    def is_fitted(self) -> bool:
        return self.n_features_ is not None

    @property
    def best_loss_trace(self) -> np.ndarray:
        """Running minimum of ``loss_trace`` (the checkpointed loss)."""
        return np.minimum.accumulate(np.asarray(self.loss_trace, dtype=float))

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float).ravel()
        if X.ndim != 2 or X.shape[0] == 0:
            raise ValueError("X must be a non-empty 2-D array")
        if X.shape[0] != y.shape[0]:
            raise SchemaMismatch("X and y have different lengths")
        self.loss_trace = []
        self._fit(X, y)
        self.n_features_ = X.shape[1]
        return self

    def _check_X(self, X) -> np.ndarray:
        if not self.is_fitted:
            raise NotFittedError(f"{type(self).__name__} is not fitted")
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features_:
            raise SchemaMismatch(f"expected {self.n_features_} features, got {X.shape[1]}")
        return X

    def predict(self, X) -> np.ndarray:
        return self._predict(self._check_X(X))

    # serialization hooks, see models.io
    def get_state(self) -> dict:
        raise NotImplementedError

    def set_state(self, state: dict) -> None:
        raise NotImplementedError

    def _fit(self, X, y):
        raise NotImplementedError

    def _predict(self, X):
        raise NotImplementedError
