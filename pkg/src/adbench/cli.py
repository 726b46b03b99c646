"""``adbench`` command line.

Exit codes: 0 when every cell succeeded, 2 when some cells failed, 1 when
the run was aborted by a configuration or I/O problem.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import io as model_io
from .bench import retabulate, run_bench
from .config import load_config
from .dataset import Preprocessor, load_csv
from .errors import AdBenchError, ConfigError, SchemaMismatch
from .synth import SYNTH_KINDS, make_synthetic, write_synthetic

SEED_ENV = "AD_BENCH_SEED"


def resolve_seed(flag, config_seed):
    """Seed precedence: command-line flag, then AD_BENCH_SEED, then the config."""
    if flag is not None:
        return int(flag)
    env = os.environ.get(SEED_ENV)
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return int(config_seed)


def cmd_bench(args) -> int:
    cfg = load_config(args.config)
    if args.output_dir:
        cfg = cfg.replace(output_dir=args.output_dir)
    if args.no_plots:
        cfg = cfg.replace(plots=False)
    if args.save_models:
        cfg = cfg.replace(save_models=True)
    seed = resolve_seed(args.seed, cfg.seed)
    result = run_bench(cfg, seed=seed, jobs=args.jobs)
    n_bad = sum(not c.ok for c in result.cells)
    for group, (cov, auc_t) in result.tables.items():
        print(cov.to_text())
        print(auc_t.to_text())
    print(f"{len(result.cells)} cells, {n_bad} failed; artifacts in {result.output_dir}")
    return result.exit_code


def _score_rows(path, n_features, target):
    """Feature matrix (and target, if present) from a CSV already in model space."""
    with open(path, newline="", encoding="utf-8-sig") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise AdBenchError(f"{path} is empty")
    header, body = rows[0], rows[1:]
    cols = [i for i, h in enumerate(header) if h != target]
    if len(cols) != n_features:
        raise SchemaMismatch(f"{path} has {len(cols)} feature columns, the model expects {n_features}")
    X = np.array([[float(r[i]) for i in cols] for r in body], dtype=float)
    y = None
    if target in header:
        j = header.index(target)
        y = np.array([float(r[j]) for r in body], dtype=float)
    return X.reshape(len(body), n_features), y


def cmd_score(args) -> int:
    model = model_io.load(args.model)
    measure = model_io.load(args.measure)
    if args.preprocessor:
        pp = Preprocessor.from_dict(json.loads(Path(args.preprocessor).read_text()))
        data = pp.transform(load_csv(args.input, args.target))
        X, y = data.features, data.target
    else:
        X, y = _score_rows(args.input, measure.n_features_, args.target)
    ids = np.arange(X.shape[0])
    pred = model.predict(X)
    values = measure.score(X, ids)
    err = np.abs(y - pred) if y is not None else np.full(X.shape[0], np.nan)
    out = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["point_id", "ad_value", "abs_error", "measure_kind", "model_kind",
                    "dataset_name", "prediction"])
        for i in range(X.shape[0]):
            w.writerow([int(ids[i]), repr(float(values[i])), repr(float(err[i])), measure.kind,
                        getattr(model, "kind", "ensemble"), args.dataset_name, repr(float(pred[i]))])
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_synth(args) -> int:
    seed = resolve_seed(args.seed, 0)
    s = make_synthetic(args.kind, args.n, args.noise, args.extrapolate, seed, args.n_test)
    prefix = Path(args.output)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    train, test = Path(f"{prefix}_train.csv"), Path(f"{prefix}_test.csv")
    write_synthetic(s, train, test)
    print(f"wrote {train} and {test}")
    return 0


def cmd_tables(args) -> int:
    tables = retabulate(args.output_dir)
    for cov, auc_t in tables.values():
        print(cov.to_text())
        print(auc_t.to_text())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adbench", description="Benchmark applicability-domain measures.")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="run a benchmark from a YAML config")
    b.add_argument("config")
    b.add_argument("--seed", type=int, default=None, help=f"overrides {SEED_ENV} and the config")
    b.add_argument("--jobs", type=int, default=1, help="datasets processed in parallel")
    b.add_argument("--output-dir", default=None)
    b.add_argument("--no-plots", action="store_true")
    b.add_argument("--save-models", action="store_true", help="dump fitted models and measures")
    b.set_defaults(func=cmd_bench)

    s = sub.add_parser("score", help="score a CSV with a dumped model and measure")
    s.add_argument("model")
    s.add_argument("measure")
    s.add_argument("input")
    s.add_argument("--target", default="y", help="target column, used for abs_error when present")
    s.add_argument("--preprocessor", default=None, help="preprocessor.json for raw input CSVs")
    s.add_argument("--dataset-name", default="")
    s.add_argument("-o", "--output", default=None)
    s.set_defaults(func=cmd_score)

    y = sub.add_parser("synth", help="write a 1-D synthetic train/test pair")
    y.add_argument("--kind", choices=SYNTH_KINDS, default="sine")
    y.add_argument("--n", type=int, default=200)
    y.add_argument("--n-test", type=int, default=None)
    y.add_argument("--noise", type=float, default=0.1)
    y.add_argument("--extrapolate", action="store_true")
    y.add_argument("--seed", type=int, default=None)
    y.add_argument("-o", "--output", default="synthetic", help="prefix for <prefix>_train/test.csv")
    y.set_defaults(func=cmd_synth)

    t = sub.add_parser("tables", help="rebuild tables from the scores.csv files of a run")
    t.add_argument("output_dir")
    t.set_defaults(func=cmd_tables)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, OSError) as exc:
        print(f"adbench: {exc}", file=sys.stderr)
        return 1
    except AdBenchError as exc:
        print(f"adbench: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
