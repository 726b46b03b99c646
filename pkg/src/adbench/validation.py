"""Coverage and moving-average AUC criteria for ranking AD measures.

Both criteria sort the test points by AD value (ties broken by point id)
and look at how the absolute errors evolve along that order. Coverage
asks how far along the order the running mean error stays under a
percentile threshold. AUC sums how far a smoothed error curve strays
from the model's mean absolute error.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInput, DegenerateScale, EvenWindow, WindowTooLarge
from .measures import AdScores


@dataclass(frozen=True, eq=False)
class CoverageResult:
    threshold: float
    percentile: float
    coverage_pct: float
    pct_scale: np.ndarray
    cum_err: np.ndarray

    @property
    def cumulative_curve(self):
        return np.column_stack([self.pct_scale, self.cum_err])


@dataclass(frozen=True, eq=False)
class AucResult:
    window: int
    smoothed_curve: np.ndarray
    e_avg: float
    raw_auc: float
    scaled_auc: float = float("nan")
    pct_scale: np.ndarray = field(default=None)

    def with_scaled(self, value):
        return AucResult(self.window, self.smoothed_curve, self.e_avg, self.raw_auc, float(value),
                         self.pct_scale)


def error_threshold(abs_errors, percentile=25.0) -> float:
    """Linear-interpolation percentile of the absolute errors."""
    return float(np.percentile(np.asarray(abs_errors, dtype=float), percentile, method="linear"))


def sorted_errors(scores: AdScores) -> np.ndarray:
    return scores.abs_errors[scores.order()]


def coverage(scores: AdScores, percentile=25.0, threshold=None) -> CoverageResult:
    """Share of AD-sorted test points whose running mean error stays under the threshold.

    The threshold defaults to the ``percentile``-th percentile of the
    errors in ``scores``; pass ``threshold`` to share one value across
    several measures scored on the same predictions. Coverage is the
    percentage position of the last point at which the running mean is
    still at or below the threshold.
    """
    n = len(scores)
    if n < 4:
        raise DegenerateInput(f"coverage needs at least 4 points, got {n}")
    if not 0 < percentile < 100:
        raise ValueError("percentile must lie strictly between 0 and 100")
    if threshold is None:
        threshold = error_threshold(scores.abs_errors, percentile)
    e = sorted_errors(scores)
    cum = np.cumsum(e) / np.arange(1, n + 1)
    pct = 100.0 * np.arange(1, n + 1) / n
    under = np.flatnonzero(cum <= threshold)
    cov = float(pct[under[-1]]) if under.size else 0.0
    return CoverageResult(float(threshold), float(percentile), cov, pct, cum)


def moving_average(values, window: int) -> np.ndarray:
    """Centered uniform moving average with mirrored edges.

    Edges are padded with their mirror image including the edge sample
    (``[2, 1 | 1, 2, 3 | 3, 2]`` for a window of 5), which keeps the output
    the same length as the input and its mean equal to the input mean.
    """
    x = np.asarray(values, dtype=float).ravel()
    window = int(window)
    if window % 2 == 0 or window < 1:
        raise EvenWindow(f"window must be a positive odd integer, got {window}")
    if window > 2 * len(x) - 1:
        raise WindowTooLarge(f"window {window} exceeds 2 * {len(x)} - 1")
    h = (window - 1) // 2
    padded = np.pad(x, h, mode="symmetric")
    c = np.concatenate([[0.0], np.cumsum(padded)])
    return (c[window:] - c[:-window]) / window


def default_window(n_test: int) -> int:
    """Odd integer nearest to ``max(5, 0.05 * n_test)``."""
    target = max(5.0, 0.05 * n_test)
    w = 2 * math.floor((target - 1) / 2 + 0.5) + 1  # halfway cases round up
    return max(1, min(w, 2 * n_test - 1))


def auc(scores: AdScores, window=None, e_avg=None) -> AucResult:
    """Sum of absolute gaps between the smoothed AD-ordered error curve and ``e_avg``.

    ``e_avg`` defaults to the mean absolute error of the scored points.
    """
    n = len(scores)
    if n == 0:
        raise DegenerateInput("no points to smooth")
    window = default_window(n) if window is None else int(window)
    e = sorted_errors(scores)
    e_avg = float(e.mean()) if e_avg is None else float(e_avg)
    smooth = moving_average(e, window)
    raw = float(np.abs(smooth - e_avg).sum())
    return AucResult(window, smooth, e_avg, raw, pct_scale=100.0 * np.arange(1, n + 1) / n)


def scale_auc(results):
    """Min-max scale the raw AUCs of one (dataset, model) cell onto [0, 1]."""
    results = list(results)
    if not results:
        return []
    raw = np.array([r.raw_auc for r in results])
    lo, hi = raw.min(), raw.max()
    if hi == lo:
        warnings.warn("all raw AUC values are equal; scaled values set to 0", DegenerateScale)
        return [r.with_scaled(0.0) for r in results]
    return [r.with_scaled((r.raw_auc - lo) / (hi - lo)) for r in results]


# -- aggregation ------------------------------------------------------------

@dataclass(frozen=True)
class CellResult:
    """Outcome of one (dataset, model, measure) cell; ``error`` is set when it failed."""

    dataset: str
    model: str
    measure: str
    coverage_pct: float | None = None
    scaled_auc: float | None = None
    error: str | None = None

    @property
    def ok(self):
        return self.error is None


@dataclass
class BenchmarkTable:
    """Measures x datasets; each cell is the mean over models, ``mean`` the mean over datasets."""

    title: str
    measures: list
    datasets: list
    cells: dict
    mean: dict
    footnotes: list

    def value(self, measure, dataset):
        return self.cells.get((measure, dataset))

    def rank(self, measure) -> int:
        return self.measures.index(measure) + 1

    def to_rows(self):
        rows = [["measure", *self.datasets, "mean"]]
        for m in self.measures:
            row = [m]
            for d in self.datasets:
                v = self.cells.get((m, d))
                row.append("" if v is None else f"{v:.6f}")
            mv = self.mean.get(m)
            row.append("" if mv is None else f"{mv:.6f}")
            rows.append(row)
        return rows

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerows(self.to_rows())
            for note in self.footnotes:
                w.writerow([f"# {note}"])

    def to_text(self, digits=2) -> str:
        head = ["measure", *self.datasets, "mean"]
        body = []
        for m in self.measures:
            vals = [self.cells.get((m, d)) for d in self.datasets] + [self.mean.get(m)]
            body.append([m] + ["-" if v is None else f"{v:.{digits}f}" for v in vals])
        widths = [max(len(r[i]) for r in [head, *body]) for i in range(len(head))]
        fmt = lambda r: "  ".join(c.ljust(widths[0]) if i == 0 else c.rjust(widths[i])
                                  for i, c in enumerate(r))
        lines = [self.title, fmt(head), "  ".join("-" * w for w in widths)]
        lines += [fmt(r) for r in body]
        lines += [f"* {note}" for note in self.footnotes]
        return "\n".join(lines) + "\n"


def _table(title, results, attr):
    datasets = sorted({r.dataset for r in results})
    measures = sorted({r.measure for r in results})
    cells, footnotes = {}, []
    for m in measures:
        for d in datasets:
            group = [r for r in results if r.measure == m and r.dataset == d]
            vals = [getattr(r, attr) for r in group if r.ok and getattr(r, attr) is not None]
            for r in group:
                if not r.ok:
                    footnotes.append(f"{r.dataset}/{r.model}/{r.measure} excluded: {r.error}")
            if vals:
                cells[(m, d)] = math.fsum(vals) / len(vals)
    mean = {}
    for m in measures:
        row = [cells[(m, d)] for d in datasets if (m, d) in cells]
        if row:
            mean[m] = math.fsum(row) / len(row)
    measures.sort(key=lambda m: (-mean.get(m, -np.inf), m))
    return BenchmarkTable(title, measures, datasets, cells, mean, footnotes)


def aggregate(results, title_prefix=""):
    """Coverage and scaled-AUC tables from a list of :class:`CellResult`.

    Failed cells are left out of every mean and listed as footnotes.
    Rows are ordered by descending cross-dataset mean.
    """
    results = list(results)
    prefix = f"{title_prefix} " if title_prefix else ""
    return (_table(f"{prefix}coverage (%)", results, "coverage_pct"),
            _table(f"{prefix}scaled AUC", results, "scaled_auc"))


# -- curve artifacts ---------------------------------------------------------

def write_curve_csv(path, x, y, extra=None):
    """Two-column curve (``pct_scale``, ``error``) plus optional constant columns."""
    extra = extra or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["pct_scale", "error", *extra])
        for xi, yi in zip(x, y):
            w.writerow([repr(float(xi)), repr(float(yi)), *(repr(float(v)) for v in extra.values())])


def plot_curve(path, x, y, level, title, ylabel, level_label):
    """Standalone SVG line plot with a horizontal reference line."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(x, y, lw=1.2, label=ylabel)
    ax.axhline(level, color="tab:red", ls="--", lw=1.0, label=level_label)
    ax.set_xlabel("test points sorted by AD value (%)")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
