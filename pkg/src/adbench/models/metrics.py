"""Test-set evaluation."""

import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import LengthMismatch, ZeroVarianceTarget


@dataclass(frozen=True)
class EvalReport:
    rmse: float
    r2: float
    abs_errors: np.ndarray
    predictions: np.ndarray

    @property
    def mae(self) -> float:
        return float(self.abs_errors.mean())


def report(y_true, y_pred) -> EvalReport:
    y_true = np.asarray(y_true, dtype=float).ravel()
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    if y_true.shape != y_pred.shape:
        raise LengthMismatch("y_true and y_pred differ in length")
    resid = y_true - y_pred
    ss_res = float(resid @ resid)
    centered = y_true - y_true.mean()
    ss_tot = float(centered @ centered)
    if ss_tot == 0.0:
        warnings.warn("test targets are constant; R^2 undefined", ZeroVarianceTarget)
        r2 = float("nan")
    else:
        r2 = 1.0 - ss_res / ss_tot
    return EvalReport(
        rmse=float(np.sqrt(ss_res / y_true.shape[0])),
        r2=r2,
        abs_errors=np.abs(resid),
        predictions=y_pred,
    )


def evaluate(model, X, y) -> EvalReport:
    """RMSE, R^2 and per-point absolute errors of a fitted model."""
    return report(y, model.predict(X))
