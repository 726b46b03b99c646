import csv
import hashlib
from pathlib import Path

import numpy as np
import pytest
import yaml

from adbench.bench import run_bench
from adbench.cli import SEED_ENV, main, resolve_seed
from adbench.config import DatasetSpec, MeasureSpec, ModelSpec, RunConfig, load_config
from adbench.dataset import PreprocessSpec
from adbench.errors import ConfigError
from adbench.measures import read_scores
from adbench.synth import make_synthetic, write_synthetic

ROOT = Path(__file__).resolve().parents[1]


def synth_files(tmp_path, n=60, seed=0, kind="sine"):
    s = make_synthetic(kind, n, 0.1, extrapolate=True, seed=seed, n_test=24)
    train, test = tmp_path / "train.csv", tmp_path / "test.csv"
    write_synthetic(s, train, test)
    return train, test


def smoke_config(tmp_path, **extra):
    train, test = synth_files(tmp_path)
    raw = {
        "datasets": [{"path": train.name, "test_path": test.name, "target": "y", "name": "toy"}],
        "models": ["ridge", {"kind": "random_forest", "params": {"n_estimators": 8}}],
        "measures": ["kappa", "leverage", "rf_sd"],
        "output_dir": str(tmp_path / "out"),
        "plots": False,
        **extra,
    }
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(raw))
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# -- configuration ------------------------------------------------------------------

def test_config_roundtrip():
    cfg = RunConfig(
        datasets=[DatasetSpec("a.csv", "y", subsample=100)],
        models=[ModelSpec("mlp", params={"hidden": [8], "epochs": 3}), ModelSpec("gpr", name="gp")],
        measures=[MeasureSpec("kappa", {"k": 3}), MeasureSpec("bnn_sd")],
        preprocess=PreprocessSpec(impute="median"),
        seed=9, window=7, auxiliary={"bnn": {"epochs": 5}},
    )
    assert RunConfig.from_yaml(cfg.to_yaml()) == cfg
    assert RunConfig.from_yaml(cfg.to_yaml()).config_hash() == cfg.config_hash()
    default = RunConfig(datasets=[DatasetSpec("a.csv", "y")])
    assert RunConfig.from_yaml(default.to_yaml()) == default


@pytest.mark.parametrize("text", [
    "datasets: [{path: a.csv, target: y}]\nsed: 3\n",
    "datasets: [{path: a.csv, target: y, sub_sample: 3}]\n",
    "datasets: [{path: a.csv, target: y}]\nmodels: [{kind: ridge, parms: {}}]\n",
    "datasets: [{path: a.csv, target: y}]\npreprocess: {normalise: zscore}\n",
])
def test_unknown_keys_rejected(text):
    with pytest.raises(ConfigError):
        RunConfig.from_yaml(text)


@pytest.mark.parametrize("text", [
    "models: [ridge]\n",
    "datasets: [{path: a.csv, target: y}]\nmodels: [svm]\n",
    "datasets: [{path: a.csv, target: y}]\nmeasures: [knn]\n",
    "datasets: [{path: a.csv, target: y}]\nwindow: 4\n",
    "datasets: [{path: a.csv, target: y}]\npercentile: 100\n",
    "datasets: [: bad\n",
])
def test_invalid_configs(text):
    with pytest.raises(ConfigError):
        RunConfig.from_yaml(text)


def test_relative_paths_resolve_against_config(tmp_path):
    cfg = load_config(smoke_config(tmp_path))
    assert Path(cfg.datasets[0].path) == (tmp_path / "train.csv").resolve()


def test_shipped_config_loads():
    cfg = load_config(ROOT / "configs" / "benchmark.yaml")
    assert len(cfg.datasets) >= 4
    assert all(Path(d.path).is_file() for d in cfg.datasets)


def test_seed_precedence(monkeypatch):
    monkeypatch.delenv(SEED_ENV, raising=False)
    assert resolve_seed(None, 3) == 3
    monkeypatch.setenv(SEED_ENV, "7")
    assert resolve_seed(None, 3) == 7
    assert resolve_seed(11, 3) == 11
    monkeypatch.setenv(SEED_ENV, "x")
    with pytest.raises(ConfigError):
        resolve_seed(None, 3)


# -- bench ---------------------------------------------------------------------------

def test_smoke_bench(tmp_path, capsys):
    code = main(["bench", str(smoke_config(tmp_path))])
    assert code == 0
    out = tmp_path / "out"
    manifest = (out / "run_manifest.txt").read_text()
    assert "cells 6 ok 6 failed 0" in manifest
    for model in ("ridge", "random_forest"):
        for measure in ("kappa", "leverage", "rf_sd"):
            d = out / "toy" / model / measure
            assert (d / "scores.csv").is_file() and (d / "coverage.csv").is_file() and (d / "auc.csv").is_file()
            assert manifest.count(f"toy/{model}/{measure}\t") == 1
    for name in ("coverage_table.csv", "auc_table.csv"):
        rows = read_csv(out / "tables" / name)
        assert rows[0] == ["measure", "toy", "mean"] and len(rows) == 4
    assert "coverage (%)" in capsys.readouterr().out
    assert load_config(out / "config.yaml").seed == 0


def test_gpr_var_with_other_model_fails_cell(tmp_path):
    train, test = synth_files(tmp_path)
    cfg = RunConfig(datasets=[DatasetSpec(str(train), "y", test_path=str(test))],
                    models=[ModelSpec("ridge"), ModelSpec("gpr")],
                    measures=[MeasureSpec("gpr_var"), MeasureSpec("kappa")],
                    output_dir=str(tmp_path / "out"), plots=False)
    res = run_bench(cfg)
    status = {(c.model, c.measure): c.status for c in res.cells}
    assert status[("ridge", "gpr_var")].startswith("failed(MissingModelContext")
    assert status[("gpr", "gpr_var")] == "ok" and status[("ridge", "kappa")] == "ok"
    assert res.exit_code == 2
    cov = read_csv(tmp_path / "out" / "tables" / "coverage_table.csv")
    assert any(r[0].startswith("# train/ridge/gpr_var excluded") for r in cov)


def test_exit_codes(tmp_path):
    assert main(["bench", str(tmp_path / "missing.yaml")]) == 1
    bad = tmp_path / "bad.yaml"
    bad.write_text("datasets: [{path: nowhere.csv, target: y}]\n")
    assert main(["bench", str(bad)]) == 1
    typo = tmp_path / "typo.yaml"
    typo.write_text("datasets: [{path: nowhere.csv, target: y}]\nseeed: 1\n")
    assert main(["bench", str(typo)]) == 1
    assert not (tmp_path / "adbench_out").exists()


def test_crash_isolation(tmp_path):
    # a model with an invalid penalty fails its own cells only
    train, test = synth_files(tmp_path)
    cfg = RunConfig(datasets=[DatasetSpec(str(train), "y", test_path=str(test))],
                    models=[ModelSpec("ridge"), ModelSpec("lasso", params={"lam": -1.0})],
                    measures=[MeasureSpec("kappa")], output_dir=str(tmp_path / "out"), plots=False)
    res = run_bench(cfg)
    assert [c.ok for c in res.cells] == [True, False]
    assert (tmp_path / "out" / "train" / "ridge" / "kappa" / "scores.csv").is_file()


def test_seed_flag_and_jobs_give_same_numbers(tmp_path, monkeypatch):
    path = smoke_config(tmp_path)
    monkeypatch.setenv(SEED_ENV, "5")
    assert main(["bench", str(path), "--output-dir", str(tmp_path / "a")]) == 0
    monkeypatch.delenv(SEED_ENV)
    assert main(["bench", str(path), "--seed", "5", "--jobs", "2", "--output-dir", str(tmp_path / "b")]) == 0
    for rel in ("tables/coverage_table.csv", "tables/cells.csv", "toy/ridge/rf_sd/scores.csv"):
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()
    assert "seed 5" in (tmp_path / "a" / "run_manifest.txt").read_text()


# -- score -----------------------------------------------------------------------------

def test_score_matches_bench(tmp_path):
    path = smoke_config(tmp_path, measures=["min_kappa", "rf_sd"])
    assert main(["bench", str(path), "--save-models"]) == 0
    run = tmp_path / "out" / "toy"
    for model in ("ridge", "random_forest"):
        for measure in ("min_kappa", "rf_sd"):
            out_csv = tmp_path / f"{model}_{measure}.csv"
            code = main(["score", str(run / model / "model.npz"), str(run / model / measure / "measure.npz"),
                         str(run / "test.csv"), "--dataset-name", "toy", "-o", str(out_csv)])
            assert code == 0
            got = read_csv(out_csv)
            ref = read_scores(run / model / measure / "scores.csv")
            values = np.array([float(r[1]) for r in got[1:]])
            errors = np.array([float(r[2]) for r in got[1:]])
            np.testing.assert_array_equal(values, ref.values)
            np.testing.assert_allclose(errors, ref.abs_errors, atol=1e-12)
            assert got[0][-1] == "prediction"


def test_score_training_rows(tmp_path):
    path = smoke_config(tmp_path, measures=["min_kappa", "rf_sd"])
    assert main(["bench", str(path), "--save-models"]) == 0
    run = tmp_path / "out" / "toy"
    pp = run / "preprocessor.json"
    rf = run / "random_forest"
    out_csv = tmp_path / "o.csv"
    assert main(["score", str(rf / "model.npz"), str(rf / "min_kappa" / "measure.npz"),
                 str(tmp_path / "train.csv"), "--preprocessor", str(pp), "-o", str(out_csv)]) == 0
    assert all(float(r[1]) == 0.0 for r in read_csv(out_csv)[1:])
    assert main(["score", str(rf / "model.npz"), str(rf / "rf_sd" / "measure.npz"),
                 str(tmp_path / "train.csv"), "--preprocessor", str(pp), "-o", str(out_csv)]) == 0
    assert all(float(r[1]) >= 0.0 for r in read_csv(out_csv)[1:])


def test_score_rejects_bad_input(tmp_path):
    path = smoke_config(tmp_path, measures=["kappa"], models=["ridge"])
    assert main(["bench", str(path), "--save-models"]) == 0
    run = tmp_path / "out" / "toy"
    wide = tmp_path / "wide.csv"
    wide.write_text("a,b,y\n1,2,3\n")
    args = [str(run / "ridge" / "model.npz"), str(run / "ridge" / "kappa" / "measure.npz")]
    assert main(["score", *args, str(wide)]) == 1
    junk = tmp_path / "junk.npz"
    junk.write_bytes(b"nope")
    assert main(["score", str(junk), args[1], str(run / "test.csv")]) == 1


# -- synth and tables ----------------------------------------------------------------------

def test_synth_linear_noise_free(tmp_path):
    assert main(["synth", "--kind", "linear", "--noise", "0", "--n", "20", "-o", str(tmp_path / "lin")]) == 0
    rows = read_csv(tmp_path / "lin_train.csv")[1:]
    for x, y in rows:
        assert float(y) == 2.0 * float(x) + 0.5


def test_synth_reproducible_and_extrapolates(tmp_path, monkeypatch):
    monkeypatch.delenv(SEED_ENV, raising=False)
    digests = []
    for name in ("a", "b"):
        assert main(["synth", "--n", "200", "--seed", "4", "--extrapolate", "-o", str(tmp_path / name)]) == 0
        digests.append(hashlib.sha256((tmp_path / f"{name}_test.csv").read_bytes()).hexdigest())
    assert digests[0] == digests[1]
    xs = [float(r[0]) for r in read_csv(tmp_path / "a_test.csv")[1:]]
    assert max(xs) > 1 and min(xs) >= -1
    train_x = [float(r[0]) for r in read_csv(tmp_path / "a_train.csv")[1:]]
    assert -1 <= min(train_x) and max(train_x) <= 1


def test_tables_rebuilds_same_tables(tmp_path):
    path = smoke_config(tmp_path)
    assert main(["bench", str(path)]) == 0
    tdir = tmp_path / "out" / "tables"
    before = {p.name: p.read_bytes() for p in tdir.glob("*_table.csv")}
    for p in tdir.glob("*_table.csv"):
        p.unlink()
    assert main(["tables", str(tmp_path / "out")]) == 0
    after = {p.name: p.read_bytes() for p in tdir.glob("*_table.csv")}
    assert before == after


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    text = capsys.readouterr().out
    for sub in ("bench", "score", "synth", "tables"):
        assert sub in text
