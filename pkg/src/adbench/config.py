"""Benchmark run configuration (YAML)."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .dataset import PreprocessSpec
from .errors import ConfigError
from .measures import MEASURE_KINDS
from .models import MODEL_KINDS


@dataclass(frozen=True)
class DatasetSpec:
    """One CSV dataset. ``test_path`` supplies a fixed test set instead of a random split."""

    path: str
    target: str
    name: str | None = None
    subsample: int | None = None
    test_path: str | None = None

    @property
    def label(self):
        return self.name or Path(self.path).stem


@dataclass(frozen=True)
class ModelSpec:
    """A regressor in the zoo.

    ``measures`` restricts the measures run for this model (default: all
    configured ones), ``exclude_measures`` drops some, and models sharing a
    ``table`` are aggregated together.
    """

    kind: str
    name: str | None = None
    params: dict = field(default_factory=dict)
    measures: list | None = None
    exclude_measures: list = field(default_factory=list)
    table: str = "main"

    @property
    def label(self):
        return self.name or self.kind


@dataclass(frozen=True)
class MeasureSpec:
    kind: str
    options: dict = field(default_factory=dict)


DEFAULT_MODELS = (
    ModelSpec("linear"),
    ModelSpec("ridge"),
    ModelSpec("lasso"),
    ModelSpec("decision_tree"),
    ModelSpec("random_forest"),
    ModelSpec("mlp", params={"hidden": [32], "epochs": 50}),
    ModelSpec("gpr"),
    ModelSpec("bnn", exclude_measures=["ensemble_sd", "correll", "gpr_var"], table="bnn_own"),
)


@dataclass(frozen=True)
class RunConfig:
    datasets: list
    models: list = field(default_factory=lambda: list(DEFAULT_MODELS))
    measures: list = field(default_factory=lambda: [MeasureSpec(k) for k in MEASURE_KINDS])
    preprocess: PreprocessSpec = field(default_factory=PreprocessSpec)
    seed: int = 0
    train_fraction: float = 0.7
    percentile: float = 25.0
    window: int | None = None
    n_members: int = 50
    bnn_samples: int = 1000
    auxiliary: dict = field(default_factory=dict)
    output_dir: str = "adbench_out"
    save_models: bool = False
    plots: bool = True

    def __post_init__(self):
        if not self.datasets:
            raise ConfigError("at least one dataset is required")
        labels = [d.label for d in self.datasets]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"dataset names must be unique: {labels}")
        names = [m.label for m in self.models]
        if len(set(names)) != len(names):
            raise ConfigError(f"model names must be unique: {names}")
        for m in self.models:
            if m.kind not in MODEL_KINDS:
                raise ConfigError(f"unknown model kind {m.kind!r}")
            for k in (m.measures or []) + list(m.exclude_measures):
                if k not in MEASURE_KINDS:
                    raise ConfigError(f"model {m.label}: unknown measure {k!r}")
        for m in self.measures:
            if m.kind not in MEASURE_KINDS:
                raise ConfigError(f"unknown measure kind {m.kind!r}")
        for kind in self.auxiliary:
            if kind not in ("random_forest", "bnn"):
                raise ConfigError(f"auxiliary models are 'random_forest' and 'bnn', not {kind!r}")
        if not 0 < self.percentile < 100:
            raise ConfigError("percentile must lie strictly between 0 and 100")
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must lie strictly between 0 and 1")
        if self.window is not None and (self.window < 1 or self.window % 2 == 0):
            raise ConfigError("window must be a positive odd integer")
        if self.n_members < 1 or self.bnn_samples < 2:
            raise ConfigError("n_members must be >= 1 and bnn_samples >= 2")

    def measures_for(self, model: ModelSpec):
        chosen = [m for m in self.measures if m.kind not in model.exclude_measures]
        if model.measures is not None:
            chosen = [m for m in chosen if m.kind in model.measures]
        return chosen

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    # -- (de)serialization --------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "datasets": [_compact(dataclasses.asdict(d)) for d in self.datasets],
            "models": [_compact(dataclasses.asdict(m), ModelSpec(m.kind)) for m in self.models],
            "measures": [_compact(dataclasses.asdict(m), MeasureSpec(m.kind)) for m in self.measures],
            "preprocess": dataclasses.asdict(self.preprocess),
            **{f.name: getattr(self, f.name) for f in dataclasses.fields(self)
               if f.name not in ("datasets", "models", "measures", "preprocess")},
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a mapping")
        _reject_unknown(raw, cls, "config")
        if "datasets" not in raw:
            raise ConfigError("config is missing 'datasets'")
        kw = dict(raw)
        kw["datasets"] = [_build(DatasetSpec, d, "dataset") for d in raw["datasets"] or []]
        if "models" in raw:
            kw["models"] = [_build(ModelSpec, m, "model") for m in raw["models"] or []]
        if "measures" in raw:
            kw["measures"] = [_build(MeasureSpec, m, "measure") for m in raw["measures"] or []]
        if "preprocess" in raw:
            kw["preprocess"] = _build(PreprocessSpec, raw["preprocess"] or {}, "preprocess")
        try:
            return cls(**kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=False)

    @classmethod
    def from_yaml(cls, text: str) -> "RunConfig":
        try:
            raw = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML: {exc}") from exc
        return cls.from_dict(raw)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _compact(d: dict, defaults=None) -> dict:
    """Drop entries equal to their defaults so dumped configs stay short."""
    if defaults is None:
        return {k: v for k, v in d.items() if v is not None}
    ref = dataclasses.asdict(defaults)
    return {k: v for k, v in d.items() if k == "kind" or v != ref[k]}


def _reject_unknown(raw: dict, cls, where: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown {where} keys: {unknown}")


def _build(cls, raw, where):
    if isinstance(raw, str) and cls in (ModelSpec, MeasureSpec):
        raw = {"kind": raw}
    if not isinstance(raw, dict):
        raise ConfigError(f"each {where} entry must be a mapping")
    _reject_unknown(raw, cls, where)
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {where} entry {raw}: {exc}") from exc


def load_config(path) -> RunConfig:
    """Read a YAML config; relative dataset paths resolve against the file's folder."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    cfg = RunConfig.from_yaml(text)
    base = path.resolve().parent

    def resolve(p):
        return p if p is None or Path(p).is_absolute() else str((base / p).resolve())

    return cfg.replace(datasets=[
        dataclasses.replace(d, path=resolve(d.path), test_path=resolve(d.test_path))
        for d in cfg.datasets
    ])
