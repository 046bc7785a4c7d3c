"""Acceptance criteria 1-10; each test records one PASS/FAIL line."""
import math
import time

import numpy as np
import pytest

from conftest import central_diff, rel_err, report
from iceo.config import ExperimentConfig
from iceo.datagen import Dataset, DgpConfig, generate_dataset
from iceo.diagnostics import bernstein_errors, krr_errors, lipschitz_check, oracle_check, semialg_verify
from iceo.experiment import build_context, run_experiment, run_misspec_study
from iceo.hypothesis import cross_entropy_loss, make_hypothesis, mean_cross_entropy
from iceo.oracle import OracleConfig
from iceo.problems import default_newsvendor
from iceo.simplex import sample_simplex_uniform, softmax
from iceo.surrogates import bernstein_fit, generate_surrogate_samples, krr_fit, mlp_fit
from iceo.training import iceo_gradient, iceo_objective

RHO = 0.01
SIZES = (100, 300, 500, 700)


def means(records, method, **where):
    vals = [r.test_cost for r in records if r.method == method and r.status == "ok"
            and all(getattr(r, k) == v for k, v in where.items())]
    return float(np.mean(vals)) if vals else math.nan


def timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def test_criterion_01_oracle_matches_brute_force():
    res, dt = timed(lambda: oracle_check(default_newsvendor(), RHO, n_points=20, grid_step=0.25, seed=0))
    ok = res["max_error"] <= 0.25 and dt < 60
    report(1, ok, f"max |w - w_grid|_inf = {res['max_error']:.4f} (<= 0.25), {dt:.1f}s")
    assert ok


def test_criterion_02_lipschitz():
    nv = default_newsvendor()
    res, dt = timed(lambda: {r: lipschitz_check(nv, r, n_pairs=200, seed=1) for r in (0.01, 0.1, 1.0)})
    viol = {r: v["violations"] for r, v in res.items()}
    ok = all(v == 0 for v in viol.values()) and dt < 60
    worst = max(v["max_ratio"] for v in res.values())
    report(2, ok, f"violations {viol}, worst ratio to bound {worst:.3f}, {dt:.1f}s")
    assert ok


def test_criterion_03_bernstein_trend():
    res, dt = timed(lambda: bernstein_errors(default_newsvendor(), RHO, orders=(4, 16), n_test=500, seed=0))
    ratio = res[16] / res[4]
    ok = ratio <= 0.75 and dt < 300
    report(3, ok, f"sup err s=4 {res[4]:.4f}, s=16 {res[16]:.4f}, ratio {ratio:.3f} (<= 0.75), {dt:.1f}s")
    assert ok


def test_criterion_04_krr_trend():
    res, dt = timed(lambda: krr_errors(default_newsvendor(), RHO, sizes=(500, 4000), sigma=0.25,
                                       seeds=range(5), degree=3))
    ratio = res[4000] / res[500]
    ok = ratio <= 0.9 and dt < 300
    report(4, ok, f"RMSE m=500 {res[500]:.4f}, m=4000 {res[4000]:.4f}, ratio {ratio:.3f} (<= 0.9), {dt:.1f}s")
    assert ok


def _smooth_dataset(nv, h, sur, rng, n=10):
    """Dataset whose surrogate decisions stay away from every newsvendor kink."""
    for _ in range(100):
        data = Dataset(rng.normal(scale=math.sqrt(5), size=(n, 3)), rng.integers(0, 4, n))
        W = sur.predict(h.forward(data.X))
        if np.min(np.abs(W[:, None, :] - nv.scenarios.values[None])) > 1e-3:
            return data
    raise RuntimeError("no smooth point found")


def test_criterion_05_gradient_fidelity():
    t0 = time.perf_counter()
    nv = default_newsvendor()
    cfg = OracleConfig(RHO)
    rng = np.random.default_rng(0)
    S = generate_surrogate_samples(nv, cfg, 1000, 0.0, 0)
    surs = {"bernstein": bernstein_fit(nv, cfg, 8), "krr": krr_fit(S.P, S.W, 3, 1.0, 1e-6),
            "mlp": mlp_fit(S.P, S.W, 32, 20, 1e-2, 0)}
    worst = {}

    P = 0.9 * sample_simplex_uniform(4, 50, rng) + 0.025
    for name, sur in surs.items():
        worst[f"jac-{name}"] = max(rel_err(sur.jacobian(p[None])[0], central_diff(lambda q: sur.predict(q[None])[0], p))
                                   for p in P)
    for kind in ("softmax-linear", "softmax-mlp"):
        errs = []
        for i in range(50):
            h = make_hypothesis(kind, 4, 3, i, width=8, scale=0.5)
            x = rng.normal(scale=2.0, size=3)
            errs.append(rel_err(h.param_jacobian(x),
                                central_diff(lambda t: h.with_flat_params(t).forward(x), h.flat_params())))
        worst[f"param-jac-{kind}"] = max(errs)
    errs = []
    for i in range(50):
        f, k = softmax(rng.normal(size=4)), int(rng.integers(4))
        errs.append(rel_err(cross_entropy_loss(f, k)[1], central_diff(lambda q: cross_entropy_loss(q, k)[0], f)))
        h = make_hypothesis("softmax-linear", 4, 3, 100 + i, scale=0.5)
        X, y = rng.normal(size=(8, 3)), rng.integers(0, 4, 8)
        errs.append(rel_err(h.flatten(mean_cross_entropy(h, X, y)[1]),
                            central_diff(lambda t: mean_cross_entropy(h.with_flat_params(t), X, y)[0],
                                         h.flat_params())))
    worst["cross-entropy"] = max(errs)
    for name, sur in surs.items():
        errs = []
        for i in range(50):
            h = make_hypothesis("softmax-linear", 4, 3, 200 + i, scale=0.05)
            data = _smooth_dataset(nv, h, sur, rng)
            g = h.flatten(iceo_gradient(data, h, sur, nv, RHO))
            fd = central_diff(lambda t: iceo_objective(data, h.with_flat_params(t), sur, nv, RHO), h.flat_params())
            errs.append(rel_err(g, fd))
        worst[f"iceo-{name}"] = max(errs)
    dt = time.perf_counter() - t0
    ok = max(worst.values()) < 1e-4 and dt < 120
    report(5, ok, "max rel err " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f" (< 1e-4), {dt:.1f}s")
    assert ok


@pytest.fixture(scope="module")
def benchmark_run(tmp_path_factory):
    """Default configuration, deg 1, four sizes, 25 simulations."""
    cfg = ExperimentConfig()
    out = tmp_path_factory.mktemp("bench")
    (path, records), dt = timed(lambda: run_experiment(cfg, out))
    return records, dt


@pytest.mark.slow
def test_criterion_06_benchmark_trend(benchmark_run):
    records, dt = benchmark_run
    failed = sum(r.status != "ok" for r in records)
    iceo = {n: means(records, "iceo", n=n) for n in SIZES}
    saa = {n: means(records, "saa", n=n) for n in SIZES}
    best700 = min(means(records, m, n=700) for m in ("pres-knn", "pres-kernel", "pto"))
    ok_saa = all(iceo[n] <= saa[n] for n in (300, 500, 700))
    ok_best = iceo[700] <= 1.05 * best700
    ok = ok_saa and ok_best and failed == 0 and dt < 1800
    detail = "; ".join(f"n={n} iceo {iceo[n]:.3f} saa {saa[n]:.3f}" for n in SIZES)
    others = ", ".join(f"{m} {means(records, m, n=700):.3f}" for m in ("pto", "pres-knn", "pres-kernel"))
    report(6, ok, f"{detail}; n=700 {others}, iceo/best {iceo[700] / best700:.4f} (<= 1.05); "
                  f"{failed} failed, {dt:.0f}s")
    assert ok


@pytest.mark.slow
def test_criterion_07_misspecification_trend(tmp_path):
    cfg = ExperimentConfig.from_mapping({"misspec": {"degs": [2, 3, 4], "n": 500}})
    (path, records), dt = timed(lambda: run_misspec_study(cfg, tmp_path))
    imp = {d: float(np.mean([r.improvement for r in records if r.method == "iceo" and r.deg == d
                             and math.isfinite(r.improvement)])) for d in (2, 3, 4)}
    ok = all(v > 0 for v in imp.values()) and imp[4] >= imp[2] and dt < 1200
    report(7, ok, "mean improvement " + ", ".join(f"deg={d} {v:+.4f}" for d, v in imp.items())
           + f" (> 0 each, deg4 >= deg2), {dt:.0f}s")
    assert ok


@pytest.mark.slow
def test_criterion_08_consistency(benchmark_run):
    records, _ = benchmark_run

    def gap(n):
        rs = [r for r in records if r.method == "iceo" and r.n == n and r.status == "ok"]
        return float(np.mean([r.test_cost for r in rs]) - np.mean([r.jstar for r in rs]))

    g100, g700 = gap(100), gap(700)
    ok = g700 < g100
    report(8, ok, f"ICEO - J* gap n=100 {g100:.4f}, n=700 {g700:.4f} (n=700 strictly smaller)")
    assert ok


def test_criterion_09_reformulation_soundness():
    res, dt = timed(lambda: semialg_verify(n_certified=50, n_violators=10, n_samples=10_000, seed=0))
    ok = (res["certified"] == 50 and res["sample_violations"] == 0 and res["violators_infeasible"] == 10
          and dt < 300)
    report(9, ok, f"{res['certified']}/50 certified, {res['sample_violations']} sampled violations, "
                  f"{res['violators_infeasible']}/10 violators infeasible, {dt:.1f}s")
    assert ok


def test_criterion_10_determinism(tmp_path):
    cfg = ExperimentConfig.from_mapping({
        "sizes": [40, 60], "sims": 2, "test_size": 200,
        "surrogate": {"m": 400, "epochs": 20},
        "train": {"epochs": 10, "patience": 5},
    })
    a, _ = run_experiment(cfg, tmp_path / "a")
    b, _ = run_experiment(cfg, tmp_path / "b")
    c, _ = run_misspec_study(cfg.with_overrides(misspec={"degs": [2], "n": 40}), tmp_path / "c")
    d, _ = run_misspec_study(cfg.with_overrides(misspec={"degs": [2], "n": 40}), tmp_path / "d")
    ok = a.read_bytes() == b.read_bytes() and c.read_bytes() == d.read_bytes()
    report(10, ok, "repeated bench and misspec runs give byte-identical results files")
    assert ok
