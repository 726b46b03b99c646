"""Gaussian process regression with a unit-variance RBF kernel.

The prior mean is zero, so targets are expected to be centered (the
benchmark z-scores them). Hyperparameters are the RBF length scale
``gamma`` and the noise level ``alpha`` added to the kernel diagonal.
"""

import math
import warnings

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from ..errors import CholeskyFailure
from .base import Regressor

GAMMA_GRID = tuple(np.logspace(-2, 2, 9))
ALPHA_GRID = tuple(np.logspace(-6, 0, 7))
_JITTERS = (0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)


def sq_dists(A, B):
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    d = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * A @ B.T
    return np.maximum(d, 0.0)


def rbf(A, B, gamma):
    """``exp(-||a - b||^2 / (2 gamma^2))``."""
    return np.exp(-0.5 * sq_dists(A, B) / (gamma * gamma))


def _cholesky(K, alpha):
    """Lower Cholesky factor of ``K + alpha I``, escalating jitter up to 1e-4."""
    n = K.shape[0]
    for jitter in _JITTERS:
        try:
            L = np.linalg.cholesky(K + (alpha + jitter) * np.eye(n))
        except np.linalg.LinAlgError:
            continue
        return L, jitter
    raise CholeskyFailure(f"K + alpha I not positive definite (alpha={alpha}) even with jitter 1e-4")


def log_marginal_likelihood(L, y):
    """LML from the Cholesky factor of ``K + alpha I``."""
    a = cho_solve((L, True), y)
    n = y.shape[0]
    return float(-0.5 * y @ a - np.log(np.diag(L)).sum() - 0.5 * n * math.log(2 * math.pi))


class GaussianProcess(Regressor):
    """GP regressor.

    With ``gamma`` and ``alpha`` both given the model is fitted with those
    values. Otherwise the pair maximizing the log marginal likelihood over
    ``gamma_grid`` x ``alpha_grid`` is selected; exact ties go to the larger
    ``alpha``.
    """

    kind = "gpr"

    def __init__(self, gamma=None, alpha=None, gamma_grid=GAMMA_GRID, alpha_grid=ALPHA_GRID):
        if (gamma is None) != (alpha is None):
            raise ValueError("give both gamma and alpha, or neither")
        if not gamma_grid or not alpha_grid:
            raise ValueError("hyperparameter grids must be non-empty")
        if min(gamma_grid) <= 0 or min(alpha_grid) <= 0:
            raise ValueError("grid values must be positive")
        super().__init__(gamma=gamma, alpha=alpha, gamma_grid=tuple(map(float, gamma_grid)),
                         alpha_grid=tuple(map(float, alpha_grid)))

    def _fit(self, X, y):
        hp = self.hyperparameters
        D = sq_dists(X, X)
        if hp["gamma"] is not None:
            gamma, alpha = float(hp["gamma"]), float(hp["alpha"])
            if gamma <= 0 or alpha < 0:
                raise ValueError("gamma must be > 0 and alpha >= 0")
            L, jitter = _cholesky(np.exp(-0.5 * D / gamma**2), alpha)
            self.lml_grid_ = None
        else:
            grid = np.full((len(hp["gamma_grid"]), len(hp["alpha_grid"])), -np.inf)
            best = None
            for i, g in enumerate(hp["gamma_grid"]):
                K = np.exp(-0.5 * D / g**2)
                for j, a in enumerate(hp["alpha_grid"]):
                    try:
                        L_ij, jit = _cholesky(K, a)
                    except CholeskyFailure:
                        continue
                    grid[i, j] = lml = log_marginal_likelihood(L_ij, y)
                    if best is None or lml > best[0] or (lml == best[0] and a > best[2]):
                        best = (lml, g, a, L_ij, jit)
            if best is None:
                raise CholeskyFailure("no grid point admitted a Cholesky factorization")
            _, gamma, alpha, L, jitter = best
            self.lml_grid_ = grid
        self.gamma_, self.alpha_, self.jitter_ = gamma, alpha, jitter
        self.X_train_ = X.copy()
        self.L_ = L
        self.alpha_vec_ = cho_solve((L, True), y)
        self.lml_ = log_marginal_likelihood(L, y)

    def _predict(self, X):
        return rbf(X, self.X_train_, self.gamma_) @ self.alpha_vec_

    def predict_var(self, X):
        """Posterior mean and variance ``k(x,x) - k*^T (K + alpha I)^-1 k*``."""
        X = self._check_X(X)
        Ks = rbf(X, self.X_train_, self.gamma_)
        mean = Ks @ self.alpha_vec_
        v = solve_triangular(self.L_, Ks.T, lower=True)
        var = 1.0 - (v * v).sum(axis=0)
        if np.any(var < -1e-9):
            warnings.warn(f"clamped negative predictive variance (min {var.min():.3g})")
        return mean, np.maximum(var, 0.0)

    def get_state(self):
        return {
            "X_train": self.X_train_, "L": self.L_, "alpha_vec": self.alpha_vec_,
            "gamma": np.float64(self.gamma_), "alpha": np.float64(self.alpha_),
            "jitter": np.float64(self.jitter_),
        }

    def set_state(self, state):
        self.X_train_ = np.asarray(state["X_train"])
        self.L_ = np.asarray(state["L"])
        self.alpha_vec_ = np.asarray(state["alpha_vec"])
        self.gamma_, self.alpha_ = float(state["gamma"]), float(state["alpha"])
        self.jitter_ = float(state["jitter"])
        self.n_features_ = self.X_train_.shape[1]


def gpr_fit_lml(X, y, gamma_grid=GAMMA_GRID, alpha_grid=ALPHA_GRID) -> GaussianProcess:
    return GaussianProcess(gamma_grid=gamma_grid, alpha_grid=alpha_grid).fit(X, y)


def gpr_predict_var(model: GaussianProcess, X):
    return model.predict_var(X)
