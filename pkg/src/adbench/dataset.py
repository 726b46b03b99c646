"""CSV loading, preprocessing and deterministic train/test splitting."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DegenerateSplit, EmptyFile, MissingTarget, RaggedRows, SchemaMismatch
from .rng import permutation

IMPUTE_CHOICES = ("mean", "median", "drop_row")
NORMALIZE_CHOICES = ("zscore", "none")
ENCODING_CHOICES = ("binary", "none")
OUTLIER_CHOICES = ("keep", "zscore_clip")


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix plus target vector.

    ``features`` holds NaN for missing numeric cells and for every
    categorical column; the raw categorical strings live in ``categorical``
    (empty string = missing) until :func:`preprocess` encodes them.
    """

    name: str
    features: np.ndarray
    target: np.ndarray
    feature_names: tuple[str, ...]
    target_name: str
    categorical: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    missing: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "features", _frozen(np.atleast_2d(self.features)))
        object.__setattr__(self, "target", _frozen(self.target).ravel())
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if self.features.shape[0] != self.target.shape[0]:
            raise SchemaMismatch(
                f"{self.features.shape[0]} feature rows but {self.target.shape[0]} targets"
            )
        if self.features.shape[1] != len(self.feature_names):
            raise SchemaMismatch("feature_names does not match the number of columns")
        for col, values in self.categorical.items():
            if col not in self.feature_names or len(values) != self.n_rows:
                raise SchemaMismatch(f"bad categorical column {col!r}")

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def is_clean(self) -> bool:
        return not self.categorical and bool(np.all(np.isfinite(self.features)))

    def row(self, i: int) -> np.ndarray:
        return self.features[i]

    def take(self, indices: Sequence[int], name: str | None = None) -> "Dataset":
        idx = np.asarray(indices, dtype=int)
        pos = {int(r): k for k, r in enumerate(idx)}
        return Dataset(
            name=name or self.name,
            features=self.features[idx],
            target=self.target[idx],
            feature_names=self.feature_names,
            target_name=self.target_name,
            categorical={c: tuple(v[i] for i in idx) for c, v in self.categorical.items()},
            missing=tuple((pos[r], c) for r, c in self.missing if r in pos),
        )


@dataclass(frozen=True)
class PreprocessSpec:
    impute: str = "mean"
    normalize: str = "zscore"
    categorical_encoding: str = "binary"
    outlier_policy: str = "keep"
    clip_k: float = 3.0
    corr_threshold: float | None = None
    normalize_target: bool = True

    def __post_init__(self):
        for value, choices, label in (
            (self.impute, IMPUTE_CHOICES, "impute"),
            (self.normalize, NORMALIZE_CHOICES, "normalize"),
            (self.categorical_encoding, ENCODING_CHOICES, "categorical_encoding"),
            (self.outlier_policy, OUTLIER_CHOICES, "outlier_policy"),
        ):
            if value not in choices:
                raise ValueError(f"{label} must be one of {choices}, got {value!r}")
        if self.clip_k <= 0:
            raise ValueError("clip_k must be positive")
        if self.corr_threshold is not None and not 0 < self.corr_threshold <= 1:
            raise ValueError("corr_threshold must lie in (0, 1]")


@dataclass(frozen=True)
class SplitDataset:
    train: Dataset
    test: Dataset
    seed: int
    train_fraction: float
    train_index: tuple[int, ...]
    test_index: tuple[int, ...]


def _parse_float(cell: str) -> float | None:
    cell = cell.strip()
    if not cell:
        return None
    try:
        v = float(cell)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def load_csv(path, target_column: str, name: str | None = None) -> Dataset:
    """Read a header-first CSV into a :class:`Dataset`.

    A column is numeric when at least half of its non-empty cells parse as
    reals; unparseable cells in a numeric column are recorded as missing.
    Other columns are kept as categorical strings. Rows whose target is
    missing are dropped with a warning.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8-sig") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise EmptyFile(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise EmptyFile(f"{path} has a header but no data rows")
    if target_column not in header:
        raise MissingTarget(f"target column {target_column!r} not in header of {path}")
    for i, r in enumerate(body):
        if len(r) != len(header):
            raise RaggedRows(f"{path}: row {i + 2} has {len(r)} cells, header has {len(header)}")

    t_col = header.index(target_column)
    target = [_parse_float(r[t_col]) for r in body]
    keep = [i for i, t in enumerate(target) if t is not None]
    if len(keep) < len(body):
        warnings.warn(f"{path}: dropped {len(body) - len(keep)} rows with missing target")
    body = [body[i] for i in keep]
    target = [target[i] for i in keep]

    names, columns, categorical, missing = [], [], {}, []
    for j, col in enumerate(header):
        if j == t_col:
            continue
        raw = [r[j].strip() for r in body]
        parsed = [_parse_float(c) for c in raw]
        nonempty = sum(1 for c in raw if c)
        n_numeric = sum(1 for v in parsed if v is not None)
        k = len(names)
        names.append(col)
        if nonempty == 0 or 2 * n_numeric >= nonempty:
            columns.append([np.nan if v is None else v for v in parsed])
            missing.extend((i, k) for i, v in enumerate(parsed) if v is None)
        else:
            columns.append([np.nan] * len(body))
            categorical[col] = tuple(raw)
            missing.extend((i, k) for i, c in enumerate(raw) if not c)

    features = np.array(columns, dtype=float).T.reshape(len(body), len(names))
    return Dataset(
        name=name or path.stem,
        features=features,
        target=np.array(target, dtype=float),
        feature_names=tuple(names),
        target_name=target_column,
        categorical=categorical,
        missing=tuple(sorted(missing)),
    )


def write_csv(d: Dataset, path) -> None:
    """Write a clean dataset; floats are written with round-trip precision."""
    if d.categorical:
        raise ValueError("encode categorical columns before writing")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*d.feature_names, d.target_name])
        for x, y in zip(d.features, d.target):
            w.writerow([_fmt(v) for v in x] + [_fmt(y)])


def _fmt(v: float) -> str:
    return "" if np.isnan(v) else repr(float(v))


def _n_bits(n_levels: int) -> int:
    return max(1, math.ceil(math.log2(n_levels))) if n_levels > 1 else 1


class Preprocessor:
    """Preprocessing statistics fitted on one dataset and applied to others.

    All statistics come from the ``fit_on`` dataset (normally the training
    split), so test rows never influence them.
    """

    def __init__(self, spec: PreprocessSpec | None = None):
        self.spec = spec or PreprocessSpec()
        self.state: dict | None = None

    def fit(self, fit_on: Dataset) -> "Preprocessor":
        spec = self.spec
        levels, modes = {}, {}
        for col, values in fit_on.categorical.items():
            present = [v for v in values if v]
            lv = sorted(set(present))
            levels[col] = lv
            modes[col] = max(lv, key=present.count) if lv else ""
        fill = {}
        for j, col in enumerate(fit_on.feature_names):
            if col in fit_on.categorical:
                continue
            x = fit_on.features[:, j]
            if np.all(np.isnan(x)):
                fill[col] = 0.0
            elif spec.impute == "median":
                fill[col] = float(np.nanmedian(x))
            else:
                fill[col] = float(np.nanmean(x))
        self.state = {
            "input_names": list(fit_on.feature_names),
            "categorical": sorted(fit_on.categorical),
            "levels": levels,
            "modes": modes,
            "fill": fill,
        }
        X, names = self._encode(fit_on, drop_missing=spec.impute == "drop_row")[:2]

        if spec.outlier_policy == "zscore_clip":
            mu, sd = X.mean(axis=0), X.std(axis=0)
            lo, hi = mu - spec.clip_k * sd, mu + spec.clip_k * sd
            X = np.clip(X, lo, hi)
            self.state["clip"] = [lo.tolist(), hi.tolist()]

        keep = list(range(X.shape[1]))
        if spec.corr_threshold is not None:
            keep = _decorrelate(X, spec.corr_threshold)
        X = X[:, keep]
        self.state["keep"] = keep
        self.state["output_names"] = [names[k] for k in keep]

        if spec.normalize == "zscore":
            mean = X.mean(axis=0)
            std = X.std(axis=0)
            self.state["mean"] = mean.tolist()
            self.state["std"] = std.tolist()
        y = fit_on.target
        if spec.normalize_target:
            ys = float(y.std())
            self.state["target"] = [float(y.mean()), ys if ys > 0 else 1.0]
        return self

    def _encode(self, d: Dataset, drop_missing: bool):
        st = self.state
        n = d.n_rows
        bad = np.zeros(n, dtype=bool)
        cols, names = [], []
        for j, col in enumerate(d.feature_names):
            if col in st["levels"]:
                raw = d.categorical[col]
                bad |= np.array([not v for v in raw], dtype=bool)
                if self.spec.categorical_encoding == "none":
                    continue
                lv = st["levels"][col]
                index = {v: i for i, v in enumerate(lv)}
                unknown = {v for v in raw if v and v not in index}
                if unknown:
                    warnings.warn(f"column {col!r}: unseen levels {sorted(unknown)} mapped to mode")
                mode = index.get(st["modes"][col], 0)
                codes = np.array([index.get(v, mode) for v in raw], dtype=np.int64)
                for b in range(_n_bits(len(lv))):
                    cols.append(((codes >> b) & 1).astype(float))
                    names.append(col if _n_bits(len(lv)) == 1 and len(lv) <= 2 else f"{col}_b{b}")
            else:
                x = d.features[:, j].copy()
                miss = np.isnan(x)
                bad |= miss
                x[miss] = st["fill"][col]
                cols.append(x)
                names.append(col)
        X = np.column_stack(cols) if cols else np.zeros((n, 0))
        rows = np.flatnonzero(~bad) if drop_missing else np.arange(n)
        return X[rows], names, rows

    def transform(self, d: Dataset) -> Dataset:
        if self.state is None:
            raise RuntimeError("Preprocessor.fit must be called first")
        st = self.state
        if list(d.feature_names) != st["input_names"] or sorted(d.categorical) != st["categorical"]:
            raise SchemaMismatch(f"dataset {d.name!r} does not match the fitted schema")
        X, _, rows = self._encode(d, drop_missing=self.spec.impute == "drop_row")
        if "clip" in st:
            X = np.clip(X, st["clip"][0], st["clip"][1])
        X = X[:, st["keep"]]
        if self.spec.normalize == "zscore":
            mean, std = np.asarray(st["mean"]), np.asarray(st["std"])
            safe = np.where(std > 0, std, 1.0)
            X = np.where(std > 0, (X - mean) / safe, 0.0)
        y = d.target[rows]
        if "target" in st:
            y = (y - st["target"][0]) / st["target"][1]
        return Dataset(
            name=d.name,
            features=X,
            target=y,
            feature_names=tuple(st["output_names"]),
            target_name=d.target_name,
        )

    def transform_features(self, X_raw: Dataset) -> np.ndarray:
        return self.transform(X_raw).features

    def inverse_target(self, y):
        if self.state and "target" in self.state:
            m, s = self.state["target"]
            return np.asarray(y) * s + m
        return np.asarray(y)

    def to_dict(self) -> dict:
        return {"spec": self.spec.__dict__.copy(), "state": self.state}

    @classmethod
    def from_dict(cls, payload: dict) -> "Preprocessor":
        p = cls(PreprocessSpec(**payload["spec"]))
        p.state = payload["state"]
        return p


def _decorrelate(X: np.ndarray, threshold: float) -> list[int]:
    """Keep the first column of every pair with |Pearson r| > threshold."""
    std = X.std(axis=0)
    keep = []
    for j in range(X.shape[1]):
        redundant = False
        for k in keep:
            if std[j] == 0 or std[k] == 0:
                continue
            r = np.corrcoef(X[:, k], X[:, j])[0, 1]
            if abs(r) > threshold:
                redundant = True
                break
        if not redundant:
            keep.append(j)
    return keep


def preprocess(d: Dataset, spec: PreprocessSpec, fit_on: Dataset) -> Dataset:
    """Apply preprocessing to ``d`` with statistics fitted on ``fit_on``."""
    if list(d.feature_names) != list(fit_on.feature_names):
        raise SchemaMismatch("d and fit_on have different columns")
    return Preprocessor(spec).fit(fit_on).transform(d)


def split(d: Dataset, seed: int, train_fraction: float = 0.7) -> SplitDataset:
    """Shuffle with a seeded Fisher-Yates permutation, then cut.

    The first ``floor(n * train_fraction)`` shuffled rows form the training
    set and the remainder the test set.
    """
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    n = d.n_rows
    n_train = math.floor(n * train_fraction + 1e-9)
    if n_train == 0 or n_train == n:
        raise DegenerateSplit(f"split of {n} rows at {train_fraction} leaves an empty side")
    perm = permutation(n, seed)
    tr, te = perm[:n_train], perm[n_train:]
    return SplitDataset(
        train=d.take(tr),
        test=d.take(te),
        seed=seed,
        train_fraction=train_fraction,
        train_index=tuple(tr),
        test_index=tuple(te),
    )


def subsample(d: Dataset, n: int, seed: int) -> Dataset:
    """Keep ``n`` rows chosen by a seeded permutation (original order kept)."""
    if n >= d.n_rows:
        return d
    idx = sorted(permutation(d.n_rows, seed)[:n])
    return d.take(idx)
