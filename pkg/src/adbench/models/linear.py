"""Ordinary least squares, ridge and lasso regression."""

import warnings

import numpy as np

from ..errors import NonConvergence, SingularDesign
from .base import Regressor


class _LinearBase(Regressor):
    def _predict(self, X):
        return X @ self.coef_ + self.intercept_

    def get_state(self):
        return {"coef": self.coef_, "intercept": np.float64(self.intercept_)}

    def set_state(self, state):
        self.coef_ = np.asarray(state["coef"], dtype=float)
        self.intercept_ = float(state["intercept"])
        self.n_features_ = self.coef_.shape[0]


def _centered(X, y):
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    return X - x_mean, y - y_mean, x_mean, y_mean


class LinearRegression(_LinearBase):
    """Least squares with an intercept, solved through the normal equations."""

    kind = "linear"

    def _fit(self, X, y):
        Xc, yc, x_mean, y_mean = _centered(X, y)
        gram = Xc.T @ Xc
        p = gram.shape[0]
        if np.linalg.matrix_rank(Xc) < p:
            raise SingularDesign(
                f"design matrix has rank {np.linalg.matrix_rank(Xc)} < {p}; use ridge"
            )
        self.coef_ = np.linalg.solve(gram, Xc.T @ yc)
        self.intercept_ = float(y_mean - x_mean @ self.coef_)


class Ridge(_LinearBase):
    """L2-penalized least squares; the intercept is not penalized."""

    kind = "ridge"

    def __init__(self, lam=1.0):
        if lam < 0:
            raise ValueError("lam must be non-negative")
        super().__init__(lam=lam)

    def _fit(self, X, y):
        Xc, yc, x_mean, y_mean = _centered(X, y)
        p = X.shape[1]
        gram = Xc.T @ Xc + self.hyperparameters["lam"] * np.eye(p)
        try:
            self.coef_ = np.linalg.solve(gram, Xc.T @ yc)
        except np.linalg.LinAlgError as exc:
            raise SingularDesign(str(exc)) from exc
        self.intercept_ = float(y_mean - x_mean @ self.coef_)


def soft_threshold(z, t):
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def lasso_lambda_max(X, y):
    """Smallest penalty at which every lasso coefficient is zero."""
    Xc = X - X.mean(axis=0)
    return float(np.max(np.abs(Xc.T @ (y - y.mean()))) / X.shape[0])


class Lasso(_LinearBase):
    """L1-penalized least squares by cyclic coordinate descent.

    Minimizes ``(1/2n) ||y - Xb - c||^2 + lam * ||b||_1``. One entry of
    ``loss_trace`` is recorded per full sweep over the coordinates; exact
    coordinate minimization makes the trace non-increasing.
    """

    kind = "lasso"

    def __init__(self, lam=0.01, max_iter=1000, tol=1e-8):
        if lam < 0:
            raise ValueError("lam must be non-negative")
        super().__init__(lam=lam, max_iter=max_iter, tol=tol)

    def objective(self, X, y, coef, intercept):
        r = y - X @ coef - intercept
        return 0.5 * float(r @ r) / X.shape[0] + self.hyperparameters["lam"] * float(
            np.abs(coef).sum()
        )

    def _fit(self, X, y):
        lam = self.hyperparameters["lam"]
        Xc, yc, x_mean, y_mean = _centered(X, y)
        n, p = Xc.shape
        col_sq = (Xc * Xc).sum(axis=0) / n
        coef = np.zeros(p)
        resid = yc.copy()
        converged = False
        for _ in range(int(self.hyperparameters["max_iter"])):
            max_step = 0.0
            for j in range(p):
                if col_sq[j] == 0.0:
                    continue
                old = coef[j]
                rho = Xc[:, j] @ resid / n + col_sq[j] * old
                new = soft_threshold(rho, lam) / col_sq[j]
                if new != old:
                    resid -= Xc[:, j] * (new - old)
                    coef[j] = new
                    max_step = max(max_step, abs(new - old))
            self.loss_trace.append(0.5 * float(resid @ resid) / n + lam * float(np.abs(coef).sum()))
            if max_step <= self.hyperparameters["tol"]:
                converged = True
                break
        if not converged:
            warnings.warn("lasso hit max_iter before converging", NonConvergence)
        self.coef_ = coef
        self.intercept_ = float(y_mean - x_mean @ coef)
