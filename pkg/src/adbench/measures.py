"""Applicability-domain measures.

Six novelty measures look only at the training inputs (``kappa``,
``min_kappa``, ``gamma``, ``delta``, ``cosine``, ``leverage``). Five
confidence measures look at model outputs (``ensemble_sd``, ``correll``,
``gpr_var``, ``rf_sd``, ``bnn_sd``). Every measure maps a query row to a
nonnegative value; larger means the prediction is expected to be worse.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.stats import rankdata

from .errors import (
    DegenerateInput,
    LengthMismatch,
    MissingModelContext,
    NotFittedError,
    SchemaMismatch,
    SingularGram,
    ZeroVector,
)
from .models import BayesianNN, Ensemble, GaussianProcess, RandomForest

NOVELTY_KINDS = ("kappa", "min_kappa", "gamma", "delta", "cosine", "leverage")
CONFIDENCE_KINDS = ("ensemble_sd", "correll", "gpr_var", "rf_sd", "bnn_sd")
MEASURE_KINDS = NOVELTY_KINDS + CONFIDENCE_KINDS

_CHUNK = 256


class AdMeasure:
    """Base class: ``fit`` on training inputs, then ``score`` query rows."""

    kind = "base"

    def __init__(self, **options):
        self.options = options
        self.n_features_ = None

    def __repr__(self):
        opts = ", ".join(f"{k}={v!r}" for k, v in sorted(self.options.items()))
        return f"{type(self).__name__}({opts})"

    @property
    def is_fitted(self):
        return self.n_features_ is not None

    def fit(self, X_train, context=None):
        X_train = np.asarray(X_train, dtype=float)
        if X_train.ndim != 2 or X_train.shape[0] == 0:
            raise DegenerateInput("training matrix must be non-empty and 2-D")
        self._fit(X_train, context)
        self.n_features_ = X_train.shape[1]
        return self

    def _check(self, X):
        if not self.is_fitted:
            raise NotFittedError(f"{self.kind} measure is not fitted")
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features_:
            raise SchemaMismatch(f"expected {self.n_features_} features, got {X.shape[1]}")
        return X

    def score(self, X, point_ids=None) -> np.ndarray:
        """AD values for each row of ``X``."""
        return self._score(self._check(X), point_ids)

    def score_one(self, x, point_id=0) -> float:
        return float(self.score(np.asarray(x, dtype=float)[None, :], [point_id])[0])

    # serialization hooks, see adbench.io
    def get_state(self) -> dict:
        raise NotImplementedError

    def set_state(self, state: dict) -> None:
        raise NotImplementedError

    @property
    def context(self):
        return None

    def _fit(self, X, context):
        raise NotImplementedError

    def _score(self, X, point_ids):
        raise NotImplementedError


# -- novelty detection ------------------------------------------------------

class NeighbourMeasure(AdMeasure):
    """Statistics of the ``k`` nearest training rows (Euclidean distance).

    Neighbour ties are broken by training-row index.
    """

    def __init__(self, kind, k=5):
        if kind not in ("kappa", "min_kappa", "gamma", "delta", "cosine"):
            raise ValueError(f"{kind!r} is not a neighbour measure")
        if k < 1:
            raise ValueError("k must be >= 1")
        self.kind = kind
        super().__init__(k=int(k))

    def _fit(self, X, context):
        k = self.options["k"]
        if k > X.shape[0]:
            raise DegenerateInput(f"k={k} exceeds the {X.shape[0]} training rows")
        self.X_train_ = X.copy()
        if self.kind == "cosine":
            norms = np.sqrt((X * X).sum(axis=1))
            if np.any(norms == 0):
                raise ZeroVector("training set contains a zero vector")
            self.train_norms_ = norms

    def _score(self, X, point_ids):
        k = self.options["k"]
        T = self.X_train_
        out = np.empty(X.shape[0])
        for s in range(0, X.shape[0], _CHUNK):
            Q = X[s:s + _CHUNK]
            diff = Q[:, None, :] - T[None, :, :]
            dist = np.sqrt((diff * diff).sum(axis=2))
            nb = np.argsort(dist, axis=1, kind="stable")[:, :k]
            d_nb = np.take_along_axis(dist, nb, axis=1)
            if self.kind == "kappa":
                out[s:s + len(Q)] = d_nb[:, -1]
            elif self.kind == "min_kappa":
                out[s:s + len(Q)] = d_nb[:, 0]
            elif self.kind == "gamma":
                out[s:s + len(Q)] = d_nb.mean(axis=1)
            elif self.kind == "delta":
                shift = T[nb].mean(axis=1) - Q
                out[s:s + len(Q)] = np.sqrt((shift * shift).sum(axis=1))
            else:
                qn = np.sqrt((Q * Q).sum(axis=1))
                if np.any(qn == 0):
                    raise ZeroVector("cosine is undefined for a zero query vector")
                cos = np.einsum("qd,qkd->qk", Q, T[nb]) / (qn[:, None] * self.train_norms_[nb])
                out[s:s + len(Q)] = (1.0 - np.clip(cos, -1.0, 1.0)).mean(axis=1)
        return out

    def get_state(self):
        return {"X_train": self.X_train_}

    def set_state(self, state):
        self.X_train_ = np.asarray(state["X_train"])
        if self.kind == "cosine":
            self.train_norms_ = np.sqrt((self.X_train_ ** 2).sum(axis=1))
        self.n_features_ = self.X_train_.shape[1]


class Leverage(AdMeasure):
    """Hat value ``x^T (X^T X)^-1 x`` for a query row ``x``.

    A singular Gram matrix gets ``1e-8 * trace / p`` added to its diagonal
    unless ``jitter=False``, in which case :class:`SingularGram` is raised.
    """

    kind = "leverage"

    def __init__(self, intercept=False, jitter=True):
        super().__init__(intercept=bool(intercept), jitter=bool(jitter))

    def _design(self, X):
        if self.options["intercept"]:
            return np.column_stack([np.ones(X.shape[0]), X])
        return X

    def _fit(self, X, context):
        D = self._design(X)
        gram = D.T @ D
        p = gram.shape[0]
        self.jitter_ = 0.0
        if np.linalg.matrix_rank(D) < p:
            if not self.options["jitter"]:
                raise SingularGram("X^T X is rank deficient")
            self.jitter_ = 1e-8 * float(np.trace(gram)) / p
            if self.jitter_ == 0.0:
                self.jitter_ = 1e-8
            gram = gram + self.jitter_ * np.eye(p)
        self.gram_ = gram
        self.factor_ = cho_factor(gram, lower=True)

    def _score(self, X, point_ids):
        D = self._design(X)
        h = (D * cho_solve(self.factor_, D.T).T).sum(axis=1)
        return np.maximum(h, 0.0)

    def get_state(self):
        return {"gram": self.gram_, "jitter": np.float64(self.jitter_)}

    def set_state(self, state):
        self.gram_ = np.asarray(state["gram"])
        self.jitter_ = float(state["jitter"])
        self.factor_ = cho_factor(self.gram_, lower=True)
        self.n_features_ = self.gram_.shape[0] - int(self.options["intercept"])


# -- confidence estimation --------------------------------------------------

def member_sd(P: np.ndarray) -> np.ndarray:
    """Sample SD (``n - 1`` denominator) down the member axis of ``P``."""
    if P.shape[0] < 2:
        warnings.warn("SD over a single member is undefined; returning 0")
        return np.zeros(P.shape[1])
    # shifting by one member makes identical members give exactly 0
    return (P - P[0]).std(axis=0, ddof=1)


def _members_of(context):
    if isinstance(context, (Ensemble, RandomForest)):
        return context
    raise MissingModelContext("this measure needs a fitted bagging ensemble or random forest")


class _ModelMeasure(AdMeasure):
    """Measure backed by a fitted model held in ``model_``."""

    @property
    def context(self):
        return self.model_

    def get_state(self):
        return {}

    def set_state(self, state):
        pass


class EnsembleSd(_ModelMeasure):
    """SD of the member predictions of a bagging ensemble."""

    kind = "ensemble_sd"

    def _fit(self, X, context):
        self.model_ = _members_of(context)

    def _score(self, X, point_ids):
        return member_sd(self.model_.predict_members(X))


class RfSd(EnsembleSd):
    """SD of the individual tree predictions of a random forest."""

    kind = "rf_sd"

    def _fit(self, X, context):
        if not isinstance(context, RandomForest):
            raise MissingModelContext("rf_sd needs a fitted RandomForest")
        self.model_ = context


def _rank_rows(P):
    """Average ranks along each row, centered and scaled to unit norm.

    Rows with no spread come back as zeros so that any correlation
    involving them is 0.
    """
    R = rankdata(P, axis=1)
    R -= R.mean(axis=1, keepdims=True)
    norm = np.sqrt((R * R).sum(axis=1, keepdims=True))
    return np.divide(R, norm, out=np.zeros_like(R), where=norm > 0)


class Correll(_ModelMeasure):
    """One minus the best Spearman correlation between the member-prediction
    vector at the query and the member-prediction vector at any training row.

    A constant prediction vector correlates 0 with everything.
    """

    kind = "correll"

    def _fit(self, X, context):
        self.model_ = _members_of(context)
        self.train_ranks_ = _rank_rows(self.model_.predict_members(X).T)

    def _score(self, X, point_ids):
        Q = _rank_rows(self.model_.predict_members(X).T)
        best = (Q @ self.train_ranks_.T).max(axis=1)
        return np.clip(1.0 - best, 0.0, 2.0)

    def get_state(self):
        return {"train_ranks": self.train_ranks_}

    def set_state(self, state):
        self.train_ranks_ = np.asarray(state["train_ranks"])


class GprVar(_ModelMeasure):
    """Predictive variance of a fitted Gaussian process."""

    kind = "gpr_var"

    def _fit(self, X, context):
        if not isinstance(context, GaussianProcess):
            raise MissingModelContext("gpr_var needs the fitted GaussianProcess model")
        self.model_ = context

    def _score(self, X, point_ids):
        return self.model_.predict_var(X)[1]


class BnnSd(_ModelMeasure):
    """Monte-Carlo SD of a Bayesian network's predictive distribution.

    Row ``i`` uses the generator seeded by ``seed ^ point_ids[i]``, so a
    point scores the same whether it is scored alone or in a batch.
    """

    kind = "bnn_sd"

    def __init__(self, n_samples=1000, seed=0):
        super().__init__(n_samples=int(n_samples), seed=int(seed))

    def _fit(self, X, context):
        if not isinstance(context, BayesianNN):
            raise MissingModelContext("bnn_sd needs a fitted BayesianNN")
        self.model_ = context

    def _score(self, X, point_ids):
        return self.model_.mc_predict(
            X, n_samples=self.options["n_samples"], seed=self.options["seed"], point_ids=point_ids
        )[1]


def make_measure(kind, **options) -> AdMeasure:
    if kind in ("kappa", "min_kappa", "gamma", "delta", "cosine"):
        return NeighbourMeasure(kind, **options)
    classes = {"leverage": Leverage, "ensemble_sd": EnsembleSd, "correll": Correll,
               "gpr_var": GprVar, "rf_sd": RfSd, "bnn_sd": BnnSd}
    if kind not in classes:
        raise ValueError(f"unknown measure {kind!r}; choose from {list(MEASURE_KINDS)}")
    return classes[kind](**options)


def fit_measure(kind, X_train, model_ctx=None, **options) -> AdMeasure:
    """Build and fit a measure.

    Novelty kinds ignore ``model_ctx``. ``ensemble_sd`` and ``correll``
    need an :class:`Ensemble` (or forest), ``gpr_var`` a
    :class:`GaussianProcess`, ``rf_sd`` a :class:`RandomForest` and
    ``bnn_sd`` a :class:`BayesianNN`.
    """
    m = make_measure(kind, **options)
    if kind in CONFIDENCE_KINDS and model_ctx is None:
        raise MissingModelContext(f"{kind} needs a fitted model context")
    return m.fit(X_train, model_ctx)


def score_kappa(m, x):
    return m.score_one(x)


score_min_kappa = score_gamma = score_delta = score_cosine = score_leverage = score_kappa
score_ensemble_sd = score_correll = score_gpr_var = score_rf_sd = score_kappa


def score_bnn_sd(m, x, point_id=0):
    return m.score_one(x, point_id)


# -- scores -----------------------------------------------------------------

SCORE_COLUMNS = ("point_id", "ad_value", "abs_error", "measure_kind", "model_kind", "dataset_name")


@dataclass(frozen=True, eq=False)
class AdScores:
    """AD values paired point-by-point with absolute prediction errors."""

    measure_kind: str
    values: np.ndarray
    abs_errors: np.ndarray
    point_ids: np.ndarray
    model_kind: str = ""
    dataset_name: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        e = np.asarray(self.abs_errors, dtype=float).ravel()
        ids = np.asarray(self.point_ids, dtype=np.int64).ravel()
        if not (v.shape == e.shape == ids.shape):
            raise LengthMismatch(
                f"values ({v.size}), abs_errors ({e.size}) and point_ids ({ids.size}) differ in length"
            )
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "abs_errors", e)
        object.__setattr__(self, "point_ids", ids)

    def __len__(self):
        return self.values.shape[0]

    def order(self) -> np.ndarray:
        """Indices sorting the points by (AD value, point id)."""
        return np.lexsort((self.point_ids, self.values))


def score_all(m: AdMeasure, X_test, abs_errors, point_ids=None, model_kind="", dataset_name=""):
    """Score every test row and pair it with its absolute error.

    ``abs_errors`` may be an array or an ``EvalReport``.
    """
    X_test = np.asarray(X_test, dtype=float)
    errors = getattr(abs_errors, "abs_errors", abs_errors)
    errors = np.asarray(errors, dtype=float).ravel()
    if X_test.ndim != 2 or X_test.shape[0] == 0:
        raise DegenerateInput("cannot score an empty test set")
    if errors.shape[0] != X_test.shape[0]:
        raise LengthMismatch(f"{X_test.shape[0]} test rows but {errors.shape[0]} errors")
    ids = np.arange(X_test.shape[0]) if point_ids is None else np.asarray(point_ids, dtype=np.int64)
    if ids.shape[0] != X_test.shape[0]:
        raise LengthMismatch("point_ids must align with the test rows")
    return AdScores(m.kind, m.score(X_test, ids), errors, ids, model_kind, dataset_name)


def _fmt(v):
    return repr(float(v))


def write_scores(scores: AdScores, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCORE_COLUMNS)
        for i in range(len(scores)):
            w.writerow([int(scores.point_ids[i]), _fmt(scores.values[i]), _fmt(scores.abs_errors[i]),
                        scores.measure_kind, scores.model_kind, scores.dataset_name])


def read_scores(path) -> AdScores:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise DegenerateInput(f"{path} holds no scores")
    missing = set(SCORE_COLUMNS) - set(rows[0])
    if missing:
        raise SchemaMismatch(f"{path} lacks columns {sorted(missing)}")
    kinds = {(r["measure_kind"], r["model_kind"], r["dataset_name"]) for r in rows}
    if len(kinds) != 1:
        raise SchemaMismatch(f"{path} mixes several (measure, model, dataset) cells")
    measure, model, dataset = kinds.pop()
    return AdScores(
        measure,
        np.array([float(r["ad_value"]) for r in rows]),
        np.array([float(r["abs_error"]) for r in rows]),
        np.array([int(r["point_id"]) for r in rows]),
        model,
        dataset,
    )
