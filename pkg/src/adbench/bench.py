"""End-to-end benchmark: data -> models -> AD measures -> coverage/AUC -> tables.

Every (dataset, model, measure) cell is isolated: an exception inside one
cell marks it failed and the run carries on. All artifacts are written by
the coordinating process after the numeric work is done.
"""

from __future__ import annotations

import csv
import json
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io as model_io
from .config import RunConfig
from .dataset import Dataset, Preprocessor, load_csv, split, subsample, write_csv
from .measures import AdScores, fit_measure, read_scores, score_all, write_scores
from .models import Ensemble, GaussianProcess, RandomForest, evaluate, make_model
from .validation import (
    CellResult,
    aggregate,
    auc,
    coverage,
    default_window,
    error_threshold,
    plot_curve,
    scale_auc,
    write_curve_csv,
)


@dataclass
class Cell:
    dataset: str
    model: str
    measure: str
    table: str
    status: str = "ok"
    seconds: float = 0.0
    scores: AdScores | None = None
    coverage: object = None
    auc: object = None

    @property
    def ok(self):
        return self.status == "ok"

    @property
    def path(self):
        return Path(self.dataset) / self.model / self.measure


@dataclass
class DatasetRun:
    name: str
    cells: list
    evals: dict = field(default_factory=dict)  # model label -> (rmse, r2) or error text
    artifacts: dict = field(default_factory=dict)  # relative path -> bytes


@dataclass
class BenchResult:
    config: RunConfig
    cells: list
    tables: dict  # table group -> (coverage_table, auc_table)
    exit_code: int
    output_dir: Path | None = None


def _failure(exc: BaseException) -> str:
    msg = str(exc).replace("\n", " ").strip()
    return f"failed({type(exc).__name__}{': ' + msg if msg else ''})"


def prepare(cfg: RunConfig, index: int, seed: int):
    """Load, subsample, split and preprocess one dataset; returns (train, test, preprocessor)."""
    spec = cfg.datasets[index]
    data = load_csv(spec.path, spec.target, name=spec.label)
    if spec.subsample:
        data = subsample(data, spec.subsample, seed)
    if spec.test_path:
        train_raw, test_raw = data, load_csv(spec.test_path, spec.target, name=spec.label)
    else:
        parts = split(data, seed, cfg.train_fraction)
        train_raw, test_raw = parts.train, parts.test
    pp = Preprocessor(cfg.preprocess).fit(train_raw)
    return pp.transform(train_raw), pp.transform(test_raw), pp


def _with_seed(kind, params, seed):
    params = dict(params)
    if "seed" in make_model(kind).hyperparameters:
        params.setdefault("seed", seed)
    return params


def _member_params(model):
    params = dict(model.hyperparameters)
    if isinstance(model, GaussianProcess):
        params["gamma"], params["alpha"] = model.gamma_, model.alpha_
    return params


class _Fits:
    """Per-dataset memo of fitted models so shared ones are trained once."""

    def __init__(self, X, y):
        self.X, self.y = X, y
        self.store = {}

    def get(self, key, build):
        if key not in self.store:
            try:
                self.store[key] = build().fit(self.X, self.y)
            except Exception as exc:  # remembered so every dependent cell reports it
                self.store[key] = exc
        hit = self.store[key]
        if isinstance(hit, Exception):
            raise hit
        return hit

    def model(self, kind, params):
        key = ("model", kind, json.dumps(params, sort_keys=True, default=str))
        return self.get(key, lambda: make_model(kind, **params))

    def ensemble(self, kind, params, n_members, seed):
        key = ("ensemble", kind, json.dumps(params, sort_keys=True, default=str), n_members, seed)
        return self.get(key, lambda: Ensemble(kind, params, n_members, seed))


def _context(kind, model, fits: _Fits, cfg: RunConfig, seed):
    if kind in ("ensemble_sd", "correll"):
        if isinstance(model, RandomForest):
            return model
        return fits.ensemble(model.kind, _member_params(model), cfg.n_members, seed)
    if kind == "gpr_var":
        return model
    if kind in ("rf_sd", "bnn_sd"):
        own = "random_forest" if kind == "rf_sd" else "bnn"
        if model.kind == own:
            return model
        return fits.model(own, _with_seed(own, cfg.auxiliary.get(own, {}), seed))
    return None


def run_dataset(cfg: RunConfig, index: int, seed: int) -> DatasetRun:
    """All cells of one dataset (numeric work only, no file output)."""
    name = cfg.datasets[index].label
    run = DatasetRun(name, [])
    train, test, pp = prepare(cfg, index, seed)
    X, y, Xt, yt = train.features, train.target, test.features, test.target
    ids = np.arange(test.n_rows)
    fits = _Fits(X, y)
    memo = {}  # measure values that do not depend on the model under test
    window = cfg.window or default_window(test.n_rows)
    if cfg.save_models:
        run.artifacts["preprocessor.json"] = json.dumps(pp.to_dict(), indent=1, sort_keys=True).encode()
        run.artifacts["test.csv"] = _csv_bytes(test)

    for mspec in cfg.models:
        measures = cfg.measures_for(mspec)
        cells = [Cell(name, mspec.label, m.kind, mspec.table) for m in measures]
        t0 = time.perf_counter()
        try:
            model = fits.model(mspec.kind, _with_seed(mspec.kind, mspec.params, seed))
            report = evaluate(model, Xt, yt)
        except Exception as exc:
            status = _failure(exc)
            run.evals[mspec.label] = status
            for c in cells:
                c.status = status
            run.cells.extend(cells)
            continue
        fit_time = time.perf_counter() - t0
        run.evals[mspec.label] = (report.rmse, report.r2)
        if cfg.save_models:
            run.artifacts[f"{mspec.label}/model.npz"] = model_io.dumps(model)

        threshold = error_threshold(report.abs_errors, cfg.percentile)
        aucs = []
        for c, mspec_measure in zip(cells, measures):
            t0 = time.perf_counter()
            options = dict(mspec_measure.options)
            if c.measure == "bnn_sd":
                options.setdefault("n_samples", cfg.bnn_samples)
                options.setdefault("seed", seed)
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    ctx = _context(c.measure, model, fits, cfg, seed)
                    shared = ctx is None or ctx is not model and not isinstance(ctx, Ensemble)
                    key = (c.measure, json.dumps(options, sort_keys=True), id(ctx))
                    if shared and key in memo:
                        measure, values = memo[key]
                    else:
                        measure = fit_measure(c.measure, X, ctx, **options)
                        values = measure.score(Xt, ids)
                        if shared:
                            memo[key] = (measure, values)
                c.scores = AdScores(c.measure, values, report.abs_errors, ids, mspec.label, name)
                c.coverage = coverage(c.scores, cfg.percentile, threshold)
                c.auc = auc(c.scores, window, report.mae)
                aucs.append(c)
                if cfg.save_models:
                    run.artifacts[f"{mspec.label}/{c.measure}/measure.npz"] = model_io.dumps(measure)
            except Exception as exc:
                c.status = _failure(exc)
            c.seconds = time.perf_counter() - t0 + (fit_time if c is cells[0] else 0.0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            scaled = scale_auc([c.auc for c in aucs])
        for c, a in zip(aucs, scaled):
            c.auc = a
        run.cells.extend(cells)
    return run


def _csv_bytes(d: Dataset) -> bytes:
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "d.csv"
        write_csv(d, path)
        return path.read_bytes()


def build_tables(cells):
    """Aggregate cells into one (coverage, auc) table pair per table group."""
    groups = {}
    for c in cells:
        groups.setdefault(c.table, []).append(
            CellResult(c.dataset, c.model, c.measure,
                       c.coverage.coverage_pct if c.ok else None,
                       c.auc.scaled_auc if c.ok else None,
                       None if c.ok else c.status)
        )
    return {g: aggregate(rs, "" if g == "main" else g) for g, rs in sorted(groups.items())}


def run_bench(cfg: RunConfig, seed=None, jobs=1, write=True) -> BenchResult:
    """Run every cell of ``cfg``; write artifacts to ``cfg.output_dir`` if ``write``."""
    seed = cfg.seed if seed is None else int(seed)
    cfg = cfg.replace(seed=seed)
    for d in cfg.datasets:  # fail fast on unreadable inputs
        for p in (d.path, d.test_path):
            if p and not Path(p).is_file():
                raise FileNotFoundError(f"dataset file not found: {p}")
    n = len(cfg.datasets)
    if jobs > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(run_dataset, [cfg] * n, range(n), [seed] * n))
    else:
        runs = [run_dataset(cfg, i, seed) for i in range(n)]
    cells = [c for r in runs for c in r.cells]
    tables = build_tables(cells)
    code = 0 if all(c.ok for c in cells) else 2
    result = BenchResult(cfg, cells, tables, code)
    if write:
        result.output_dir = write_outputs(cfg, runs, tables)
    return result


# -- artifacts ----------------------------------------------------------------

def _fmt(v):
    return "" if v is None else repr(float(v))


def write_cell(out: Path, c: Cell, plots: bool):
    d = out / c.path
    d.mkdir(parents=True, exist_ok=True)
    write_scores(c.scores, d / "scores.csv")
    cov, a = c.coverage, c.auc
    write_curve_csv(d / "coverage.csv", cov.pct_scale, cov.cum_err, {"threshold": cov.threshold})
    write_curve_csv(d / "auc.csv", a.pct_scale, a.smoothed_curve, {"e_avg": a.e_avg})
    if plots:
        title = f"{c.dataset} / {c.model} / {c.measure}"
        plot_curve(d / "coverage.svg", cov.pct_scale, cov.cum_err, cov.threshold,
                   f"{title}: coverage {cov.coverage_pct:.1f}%", "cumulative mean |error|",
                   f"{cov.percentile:g}th percentile threshold")
        plot_curve(d / "auc.svg", a.pct_scale, a.smoothed_curve, a.e_avg,
                   f"{title}: AUC {a.raw_auc:.3g}", f"moving average |error| (window {a.window})",
                   "mean absolute error")


def write_tables(out: Path, tables: dict):
    tdir = out / "tables"
    tdir.mkdir(parents=True, exist_ok=True)
    for group, (cov, auc_t) in tables.items():
        prefix = "" if group == "main" else f"{group}_"
        cov.write_csv(tdir / f"{prefix}coverage_table.csv")
        auc_t.write_csv(tdir / f"{prefix}auc_table.csv")
        (tdir / f"{prefix}tables.txt").write_text(cov.to_text() + "\n" + auc_t.to_text())


CELL_COLUMNS = ("dataset", "model", "measure", "table", "status", "coverage_pct", "threshold",
                "raw_auc", "scaled_auc", "window", "e_avg")


def write_outputs(cfg: RunConfig, runs, tables) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(cfg.to_yaml())
    cells = [c for r in runs for c in r.cells]
    paths = ["config.yaml"]
    for r in runs:
        for rel, blob in sorted(r.artifacts.items()):
            p = out / r.name / rel
            p.parent.mkdir(parents=True, exist_ok=True)
            p.write_bytes(blob)
            paths.append(str(Path(r.name) / rel))
    for c in cells:
        if c.ok:
            write_cell(out, c, cfg.plots)
            paths.append(str(c.path / "scores.csv"))
    write_tables(out, tables)
    with open(out / "tables" / "cells.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CELL_COLUMNS)
        for c in cells:
            ok = c.ok
            w.writerow([c.dataset, c.model, c.measure, c.table, c.status,
                        _fmt(c.coverage.coverage_pct if ok else None),
                        _fmt(c.coverage.threshold if ok else None),
                        _fmt(c.auc.raw_auc if ok else None), _fmt(c.auc.scaled_auc if ok else None),
                        c.auc.window if ok else "", _fmt(c.auc.e_avg if ok else None)])
    with open(out / "tables" / "models.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["dataset", "model", "status", "rmse", "r2"])
        for r in runs:
            for label, ev in r.evals.items():
                if isinstance(ev, str):
                    w.writerow([r.name, label, ev, "", ""])
                else:
                    w.writerow([r.name, label, "ok", _fmt(ev[0]), _fmt(ev[1])])
    lines = [f"config_hash {cfg.config_hash()}", f"seed {cfg.seed}",
             f"cells {len(cells)} ok {sum(c.ok for c in cells)} failed {sum(not c.ok for c in cells)}", ""]
    lines += [f"{c.path.as_posix()}\t{c.status}\t{c.seconds:.3f}s" for c in cells]
    lines += ["", "artifacts"] + [f"  {p}" for p in paths]
    (out / "run_manifest.txt").write_text("\n".join(lines) + "\n")
    return out


# -- re-aggregation -------------------------------------------------------------

def retabulate(output_dir, cfg: RunConfig | None = None):
    """Rebuild the tables of a finished run from its ``scores.csv`` files."""
    from .config import load_config

    out = Path(output_dir)
    cfg = cfg or load_config(out / "config.yaml")
    groups = {m.label: m.table for m in cfg.models}
    cells = []
    by_model = {}
    for path in sorted(out.glob("*/*/*/scores.csv")):
        s = read_scores(path)
        by_model.setdefault((s.dataset_name, s.model_kind), []).append(s)
    for (dataset, model), group in sorted(by_model.items()):
        errors = group[0].abs_errors
        threshold = error_threshold(errors, cfg.percentile)
        window = cfg.window or default_window(len(errors))
        made = []
        for s in group:
            c = Cell(dataset, model, s.measure_kind, groups.get(model, "main"), scores=s)
            c.coverage = coverage(s, cfg.percentile, threshold)
            c.auc = auc(s, window, float(errors.mean()))
            made.append(c)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for c, a in zip(made, scale_auc([c.auc for c in made])):
                c.auc = a
        cells.extend(made)
    listing = out / "tables" / "cells.csv"
    if listing.is_file():
        with open(listing, newline="") as fh:
            for row in csv.DictReader(fh):
                if row["status"] != "ok":
                    cells.append(Cell(row["dataset"], row["model"], row["measure"], row["table"],
                                      status=row["status"]))
    if not cells:
        raise FileNotFoundError(f"no scores.csv files under {out}")
    tables = build_tables(cells)
    write_tables(out, tables)
    return tables
