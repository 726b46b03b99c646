"""One-dimensional toy problems with an in-domain and an out-of-domain region.

Training inputs are uniform on [-1, 1]. Test inputs are drawn from the same
interval or, with ``extrapolate=True``, half from [-1, 1] and half from
[2, 3], which no training point covers.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset

SYNTH_KINDS = ("sine", "linear", "step")
TRAIN_RANGE = (-1.0, 1.0)
EXTRAPOLATION_RANGE = (2.0, 3.0)
LINEAR_SLOPE = 2.0
LINEAR_INTERCEPT = 0.5


def target_function(kind):
    if kind == "sine":
        return lambda x: np.sin(np.pi * x)
    if kind == "linear":
        return lambda x: LINEAR_SLOPE * x + LINEAR_INTERCEPT
    if kind == "step":
        return lambda x: np.where(x < 0.0, -1.0, 1.0)
    raise ValueError(f"unknown synthetic kind {kind!r}; choose from {SYNTH_KINDS}")


@dataclass(frozen=True, eq=False)
class SyntheticSplit:
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    extrapolated: np.ndarray  # bool mask over test rows

    def datasets(self, name="synthetic"):
        return (Dataset(name, self.x_train[:, None], self.y_train, ("x",), "y"),
                Dataset(name, self.x_test[:, None], self.y_test, ("x",), "y"))


def make_synthetic(kind="sine", n=200, noise=0.1, extrapolate=True, seed=0, n_test=None):
    """Draw ``n`` training points and ``n_test`` (default ``n``) test points.

    Targets get independent Gaussian noise of SD ``noise``.
    """
    f = target_function(kind)
    if n < 1:
        raise ValueError("n must be >= 1")
    n_test = n if n_test is None else int(n_test)
    rng = np.random.default_rng(seed)
    x_train = rng.uniform(*TRAIN_RANGE, size=n)
    if extrapolate:
        n_out = n_test // 2
        x_test = np.concatenate([rng.uniform(*TRAIN_RANGE, size=n_test - n_out),
                                 rng.uniform(*EXTRAPOLATION_RANGE, size=n_out)])
        out = np.arange(n_test) >= n_test - n_out
    else:
        x_test = rng.uniform(*TRAIN_RANGE, size=n_test)
        out = np.zeros(n_test, dtype=bool)
    y_train = f(x_train) + noise * rng.standard_normal(n)
    y_test = f(x_test) + noise * rng.standard_normal(n_test)
    return SyntheticSplit(x_train, y_train, x_test, y_test, out)


def write_synthetic(split: SyntheticSplit, train_path, test_path) -> None:
    for path, x, y in ((train_path, split.x_train, split.y_train),
                       (test_path, split.x_test, split.y_test)):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "y"])
            for xi, yi in zip(x, y):
                w.writerow([repr(float(xi)), repr(float(yi))])
