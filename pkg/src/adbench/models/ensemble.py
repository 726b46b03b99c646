"""Homogeneous bagging ensembles."""

import numpy as np

from ..errors import NotFittedError, SchemaMismatch


class Ensemble:
    """``n_members`` copies of one regressor kind, each fit on a bootstrap resample.

    Member ``i`` draws its resample and its own seed from ``seed + i``, so
    fitting members in any order gives identical results. With
    ``bootstrap=False`` every member sees the full training set and the same
    seed (a test hook that yields identical members).
    """

    def __init__(self, kind, params=None, n_members=50, seed=0, bootstrap=True):
        from . import MODEL_KINDS

        if kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {kind!r}")
        if n_members < 1:
            raise ValueError("n_members must be >= 1")
        self.kind = kind
        self.params = dict(params or {})
        self.n_members = int(n_members)
        self.seed = int(seed)
        self.bootstrap = bool(bootstrap)
        self.members = []

    def _member(self, i):
        from . import make_model

        params = dict(self.params)
        if "seed" in make_model(self.kind).hyperparameters:
            params["seed"] = self.seed + (i if self.bootstrap else 0)
        return make_model(self.kind, **params)

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float).ravel()
        n = X.shape[0]
        self.members = []
        for i in range(self.n_members):
            if self.bootstrap:
                idx = np.random.default_rng(self.seed + i).integers(0, n, size=n)
            else:
                idx = np.arange(n)
            self.members.append(self._member(i).fit(X[idx], y[idx]))
        return self

    @property
    def is_fitted(self):
        return len(self.members) == self.n_members and all(m.is_fitted for m in self.members)

    def predict_members(self, X) -> np.ndarray:
        """Member predictions, shape ``(n_members, n_rows)``."""
        if not self.is_fitted:
            raise NotFittedError("ensemble is not fitted")
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.members[0].n_features_:
            raise SchemaMismatch(f"expected {self.members[0].n_features_} features, got {X.shape[1]}")
        return np.vstack([m.predict(X) for m in self.members])

    def predict(self, X) -> np.ndarray:
        return self.predict_members(X).mean(axis=0)
