"""From-scratch regressor zoo."""

from .base import Regressor
from .bnn import BayesianNN, bnn_fit_elbo, bnn_mc_predict, kl_gaussian
from .ensemble import Ensemble
from .gpr import GaussianProcess, gpr_fit_lml, gpr_predict_var
from .linear import Lasso, LinearRegression, Ridge
from .metrics import EvalReport, evaluate, report
from .mlp import MLP
from .tree import DecisionTree, RandomForest

MODEL_KINDS = {
    "linear": LinearRegression,
    "ridge": Ridge,
    "lasso": Lasso,
    "decision_tree": DecisionTree,
    "random_forest": RandomForest,
    "mlp": MLP,
    "gpr": GaussianProcess,
    "bnn": BayesianNN,
}


def make_model(kind, **params) -> Regressor:
    try:
        cls = MODEL_KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown model kind {kind!r}; choose from {sorted(MODEL_KINDS)}") from None
    return cls(**params)


__all__ = [
    "MODEL_KINDS", "make_model", "Regressor", "Ensemble", "EvalReport", "evaluate", "report",
    "LinearRegression", "Ridge", "Lasso", "DecisionTree", "RandomForest", "MLP",
    "GaussianProcess", "BayesianNN", "gpr_fit_lml", "gpr_predict_var", "bnn_fit_elbo",
    "bnn_mc_predict", "kl_gaussian",
]
