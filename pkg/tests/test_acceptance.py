"""End-to-end acceptance checks; each test logs one PASS/FAIL line via ``record_criterion``."""

import time
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import spearmanr

import oracles
from adbench.cli import main
from adbench.measures import _rank_rows, fit_measure, member_sd
from adbench.models import (
    MLP,
    BayesianNN,
    Ensemble,
    GaussianProcess,
    RandomForest,
    kl_gaussian,
)
from adbench.models.gpr import gpr_fit_lml
from adbench.measures import AdScores
from adbench.synth import make_synthetic
from adbench.validation import coverage, moving_average

ROOT = Path(__file__).resolve().parents[1]
CONFIG = ROOT / "configs" / "benchmark.yaml"
NEIGHBOUR_ORACLES = {
    "kappa": oracles.kappa,
    "min_kappa": oracles.min_kappa,
    "gamma": oracles.gamma,
    "delta": oracles.delta,
    "cosine": oracles.cosine,
}


def test_measures_match_brute_force(record_criterion):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        n, d = int(rng.integers(10, 51)), int(rng.integers(1, 6))
        T = rng.normal(size=(n, d))
        Q = rng.normal(size=(4, d))
        for kind, fn in NEIGHBOUR_ORACLES.items():
            got = fit_measure(kind, T).score(Q)
            want = np.array([fn(T.tolist(), q.tolist(), 5) for q in Q])
            worst = max(worst, float(np.max(np.abs(got - want))))
        got = fit_measure("leverage", T).score(Q)
        want = np.array([oracles.leverage(T, q) for q in Q])
        worst = max(worst, float(np.max(np.abs(got - want) / np.maximum(1.0, np.abs(want)))))
        ens = Ensemble("decision_tree", {"max_depth": 3}, n_members=8,
                       seed=int(rng.integers(1 << 30))).fit(T, rng.normal(size=n))
        got = fit_measure("correll", T, ens).score(Q)
        train_P = ens.predict_members(T).T.tolist()
        want = np.array([oracles.correll(train_P, p) for p in ens.predict_members(Q).T.tolist()])
        worst = max(worst, float(np.max(np.abs(got - want))))
    seconds = time.perf_counter() - start
    passed = worst <= 1e-10 and seconds < 10
    record_criterion(1, "measures match brute-force oracles", passed,
                     f"max deviation {worst:.1e}, {seconds:.1f}s")
    assert worst <= 1e-10
    assert seconds < 10


def test_analytic_identities(record_criterion):
    checks = {}
    checks["kl standard"] = abs(kl_gaussian(0.0, 1.0)) <= 1e-12
    checks["kl shifted"] = abs(kl_gaussian(1.0, 1.0) - 0.5) <= 1e-12
    rng = np.random.default_rng(0)
    X = rng.normal(size=(30, 4))
    X[:, 3] = X[:, 0] + X[:, 1]  # rank 3
    full = X[:, :3]
    h = fit_measure("leverage", full).score(full)
    checks["hat trace"] = abs(h.sum() - np.linalg.matrix_rank(full)) <= 1e-8
    gp = GaussianProcess(gamma=0.8, alpha=0.0).fit(full, rng.normal(size=30))
    checks["gpr training variance"] = gp.predict_var(full)[1].max() <= 1e-8
    same = Ensemble("ridge", n_members=5, bootstrap=False).fit(full, rng.normal(size=30))
    checks["identical members"] = np.all(member_sd(same.predict_members(full)) == 0.0)
    failed = [k for k, ok in checks.items() if not ok]
    record_criterion(2, "analytic identities", not failed, ", ".join(failed) or "5 of 5 hold")
    assert not failed


def _max_relative_error(analytic, numeric):
    worst = 0.0
    for a, b in zip(analytic, numeric):
        scale = max(float(np.max(np.abs(b))), 1e-8)
        worst = max(worst, float(np.max(np.abs(a - b))) / scale)
    return worst


def test_gradients_match_finite_differences(record_criterion):
    rng = np.random.default_rng(7)
    start = time.perf_counter()
    worst = 0.0
    for i in range(10):
        d = int(rng.integers(1, 4))
        hidden = tuple(int(h) for h in rng.integers(2, 6, size=int(rng.integers(1, 4))))
        X, y = rng.normal(size=(8, d)), rng.normal(size=8)

        mlp = MLP(hidden=hidden, activation="tanh", l2=float(rng.uniform(0, 0.1)), epochs=1, seed=i)
        mlp.fit(X, y)
        _, gW, gb = mlp.loss_and_grads(X, y)
        num = oracles.finite_difference(lambda: mlp.loss_and_grads(X, y)[0], mlp.params)
        worst = max(worst, _max_relative_error(gW + gb, num))

        bnn = BayesianNN(hidden=hidden, activation="tanh", noise_sigma=0.5, init_sigma=0.2)
        bnn.init_params(d, rng)
        eps = bnn.sample_noise(rng)
        _, grads = bnn.loss_and_grads(X, y, eps, n_total=50)
        num = oracles.finite_difference(lambda: bnn.loss_and_grads(X, y, eps, n_total=50)[0], bnn.params)
        worst = max(worst, _max_relative_error(grads, num))
    seconds = time.perf_counter() - start
    passed = worst <= 1e-4 and seconds < 30
    record_criterion(3, "MLP and BNN gradients match finite differences", passed,
                     f"max relative error {worst:.1e}, {seconds:.1f}s")
    assert worst <= 1e-4
    assert seconds < 30


def test_validation_oracle(record_criterion):
    errors = np.arange(1.0, 101.0)
    r = coverage(AdScores("kappa", errors, errors, np.arange(100)), 25)
    ma = moving_average([1, 2, 3, 4, 5], 3)
    ma_ok = np.max(np.abs(ma - [4 / 3, 2, 3, 4, 14 / 3])) <= 1e-12
    rng = np.random.default_rng(3)
    invariant = True
    for _ in range(50):
        ad, err = rng.normal(size=40), rng.exponential(size=40)
        a = coverage(AdScores("kappa", ad, err, np.arange(40))).coverage_pct
        b = coverage(AdScores("kappa", np.exp(2 * ad) + 5, err, np.arange(40))).coverage_pct
        invariant &= a == b
    passed = r.threshold == 25.75 and r.coverage_pct == 50.0 and ma_ok and invariant
    record_criterion(4, "validation framework oracle", passed,
                     f"threshold {r.threshold}, coverage {r.coverage_pct}%")
    assert r.threshold == 25.75 and r.coverage_pct == 50.0
    assert ma_ok and invariant


# -- synthetic extrapolation -------------------------------------------------------

SYNTH_SEED = 0


def _synthetic_values(measure):
    s = make_synthetic("sine", 200, 0.1, extrapolate=True, seed=SYNTH_SEED)
    X, Xt = s.x_train[:, None], s.x_test[:, None]
    if measure == "ensemble_sd":
        ctx = Ensemble("mlp", {"hidden": [64], "epochs": 200}, n_members=20, seed=SYNTH_SEED)
    elif measure == "gpr_var":
        ctx = GaussianProcess()
    elif measure == "bnn_sd":
        ctx = BayesianNN(seed=SYNTH_SEED)
    else:
        ctx = RandomForest(n_estimators=100, seed=SYNTH_SEED)
    ctx.fit(X, s.y_train)
    opts = {"n_samples": 1000, "seed": SYNTH_SEED} if measure == "bnn_sd" else {}
    values = fit_measure(measure, X, ctx, **opts).score(Xt, np.arange(len(Xt)))
    errors = np.abs(ctx.predict(Xt) - s.y_test)
    return values, errors, s.extrapolated


CRITERION_5 = {}


@pytest.mark.parametrize("measure", ["ensemble_sd", "gpr_var", "bnn_sd", "rf_sd"])
def test_synthetic_extrapolation(measure, record_criterion):
    start = time.perf_counter()
    values, errors, out = _synthetic_values(measure)
    seconds = time.perf_counter() - start
    median_out = float(np.median(values[out]))
    p95_in = float(np.percentile(values[~out], 95))
    rho = float(spearmanr(values, errors).correlation)
    ok = median_out > p95_in and rho >= 0.5 and seconds < 120
    CRITERION_5[measure] = (ok, f"{measure}: median out {median_out:.3g} vs p95 in {p95_in:.3g}, "
                                f"rho {rho:.2f}, {seconds:.0f}s")
    detail = "; ".join(v[1] for v in CRITERION_5.values())
    record_criterion(5, "synthetic extrapolation raises confidence measures",
                     len(CRITERION_5) == 4 and all(v[0] for v in CRITERION_5.values()), detail)
    assert median_out > p95_in
    assert rho >= 0.5
    assert seconds < 120


# -- full benchmark ------------------------------------------------------------------

_RUNS = {}


def _bench(seed, tmp_root):
    if seed not in _RUNS:
        out = tmp_root / f"seed{seed}"
        code = main(["bench", str(CONFIG), "--seed", str(seed), "--no-plots", "--output-dir", str(out)])
        assert code in (0, 2)
        _RUNS[seed] = out
    return _RUNS[seed]


def _final_column(path):
    import csv

    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    return {r[0]: float(r[-1]) for r in rows[1:] if r[-1]}


@pytest.fixture(scope="module")
def bench_root(tmp_path_factory):
    return tmp_path_factory.mktemp("bench")


@pytest.mark.slow
def test_benchmark_ordering(bench_root, record_criterion):
    outcomes = []
    for seed in range(1, 6):
        tables = _bench(seed, bench_root) / "tables"
        main_cov = _final_column(tables / "coverage_table.csv")
        own_cov = _final_column(tables / "bnn_own_coverage_table.csv")
        ranked = sorted(main_cov, key=lambda m: -main_cov[m])
        top = ranked[0] == "ensemble_sd"
        bottom = "correll" in ranked[-2:]
        bnn = own_cov["bnn_sd"] > main_cov["bnn_sd"]
        outcomes.append((seed, top, bottom, bnn, ranked[0]))
    holds = sum(t and b and n for _, t, b, n, _ in outcomes)
    detail = f"{holds}/5 seeds; " + ", ".join(
        f"seed {s}: top={leader}, correll bottom2={b}, bnn own>ext={n}" for s, t, b, n, leader in outcomes
    )
    record_criterion(6, "benchmark ordering across seeds", holds >= 4, detail)
    assert len(_final_column(tables / "coverage_table.csv")) == 11
    assert holds >= 4


@pytest.mark.slow
def test_benchmark_determinism(bench_root, tmp_path, record_criterion):
    first = _bench(1, bench_root)
    second = tmp_path / "again"
    assert main(["bench", str(CONFIG), "--seed", "1", "--no-plots", "--output-dir", str(second)]) in (0, 2)
    names = sorted(p.relative_to(first) for p in first.rglob("*.csv"))
    assert names == sorted(p.relative_to(second) for p in second.rglob("*.csv"))
    differ = [str(n) for n in names if (first / n).read_bytes() != (second / n).read_bytes()]
    record_criterion(7, "repeated benchmark runs are byte-identical", not differ,
                     f"{len(names)} CSV files compared, {len(differ)} differ")
    assert not differ
