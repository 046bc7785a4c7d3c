"""Simulation sweeps: per-(deg, n, sim) cells, result persistence, plot-data emission.

Results go to ``results.csv`` (deterministic content only, one row per
method and cell) and wall-clock times to a sidecar ``timings.csv`` so the
results file is byte-identical across repeated runs.
"""
from __future__ import annotations

import csv
import json
import math
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .benchmarks import (kernel_policy, knn_policy, median_distance, improvement, saa_policy)
from .config import METHODS, ExperimentConfig
from .datagen import DgpConfig, conditional_probs, generate_dataset
from .hypothesis import make_hypothesis
from .oracle import OracleConfig, solve_batch
from .problems import build_problem
from .serialization import save_model
from .surrogates import fit_surrogate
from .training import (TrainConfig, deployed_policy, empirical_risk, train_cross_entropy,
                       train_iceo)

SCHEMA_VERSION = 1
SCHEMA_LINE = f"# iceo-results schema={SCHEMA_VERSION}"
COLUMNS = ("method", "deg", "n", "sim", "status", "test_cost", "jstar", "improvement",
           "hyperparams", "error")
FEAS_TOL = 1e-6

# stream tags for seed derivation
_DGP, _DATA, _TEST, _INIT, _TRAIN, _SPLIT = range(6)


def derive_seed(*keys: int) -> int:
    """Deterministic 63-bit seed from a tuple of nonnegative integers."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(2, np.uint64)[0] >> np.uint64(1))


@dataclass
class ResultRecord:
    method: str
    deg: int
    n: int
    sim: int
    status: str = "ok"
    test_cost: float = math.nan
    jstar: float = math.nan
    improvement: float = math.nan
    hyperparams: dict = field(default_factory=dict)
    error: str = ""
    wall_time: float = 0.0

    def row(self) -> list[str]:
        def num(v):
            return "" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))

        return [self.method, str(self.deg), str(self.n), str(self.sim), self.status,
                num(self.test_cost), num(self.jstar), num(self.improvement),
                json.dumps(self.hyperparams, sort_keys=True), self.error]


def _method_order(m: str) -> int:
    return METHODS.index(m) if m in METHODS else len(METHODS)


def _sort_key(r: ResultRecord):
    return (r.deg, r.n, r.sim, _method_order(r.method))


def write_results(records, out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = sorted(records, key=_sort_key)
    path = out_dir / "results.csv"
    with path.open("w", newline="") as fh:
        fh.write(SCHEMA_LINE + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in records:
            w.writerow(r.row())
    with (out_dir / "timings.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "deg", "n", "sim", "wall_time"])
        for r in records:
            w.writerow([r.method, r.deg, r.n, r.sim, f"{r.wall_time:.3f}"])
    return path


def read_results(path):
    """Parse a results file. Returns ``(records, n_malformed)``."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# iceo-results"):
        raise ValueError(f"{path}: missing results schema header")
    reader = csv.reader(lines[1:])
    header = next(reader, None)
    if header is None or tuple(header) != COLUMNS:
        raise ValueError(f"{path}: unexpected column header")
    records, bad = [], 0

    def num(s):
        return math.nan if s == "" else float(s)

    for row in reader:
        try:
            if len(row) != len(COLUMNS):
                raise ValueError("wrong field count")
            rec = ResultRecord(row[0], int(row[1]), int(row[2]), int(row[3]), row[4],
                               num(row[5]), num(row[6]), num(row[7]), json.loads(row[8]), row[9])
        except (ValueError, json.JSONDecodeError):
            bad += 1
            continue
        records.append(rec)
    return records, bad


# ---------------------------------------------------------------------------
# one simulation cell


@dataclass
class CellContext:
    cfg: dict
    problem: object
    surrogate: object


def _train_cfg(cfg: dict, lr: float, seed: int) -> TrainConfig:
    t = cfg["train"]
    return TrainConfig(rho=cfg["rho"], lr=lr, beta1=t["beta1"], beta2=t["beta2"], eps=t["eps"],
                       epochs=int(t["epochs"]), batch_size=t["batch_size"], patience=int(t["patience"]),
                       seed=seed, val_metric=t["val_metric"])


def _check_feasible(problem, policy, X, method):
    W = np.atleast_2d(policy(X))
    if not np.all(problem.region.member_mask(W, FEAS_TOL)):
        raise RuntimeError(f"{method}: deployed decision outside the feasible region")


def _fit_pto(ctx, train, val, h0, seed):
    best = None
    for lr in ctx.cfg["train"]["lrs"]:
        res = train_cross_entropy(train, h0, _train_cfg(ctx.cfg, lr, seed), val)
        if best is None or res.best_val < best[1].best_val:
            best = (lr, res)
    return best


def run_cell(ctx: CellContext, deg: int, n: int, sim: int, methods) -> list[ResultRecord]:
    """Generate data for one cell, fit every method, evaluate unregularized test cost."""
    cfg, problem = ctx.cfg, ctx.problem
    seed, rho = int(cfg["seed"]), float(cfg["rho"])
    d = cfg["dgp"]
    dgp = DgpConfig(p=d["p"], M=d["M"], K=d["K"], deg=deg, B_max=d["B_max"],
                    seed=derive_seed(seed, _DGP, sim))
    data = generate_dataset(n, dgp, derive_seed(seed, _DATA, sim, n, deg))
    test = generate_dataset(int(cfg["test_size"]), dgp,
                            derive_seed(seed, _TEST, sim, n, deg, int(cfg["test_seed_offset"])))
    train, val = data.split(cfg["val_fraction"], derive_seed(seed, _SPLIT, sim, n, deg))
    oracle_cfg = OracleConfig(rho)
    train_seed = derive_seed(seed, _TRAIN, sim, n, deg)
    hc = cfg["hypothesis"]
    h0 = make_hypothesis(hc["kind"], problem.K, d["p"], derive_seed(seed, _INIT, sim, n, deg),
                         hc["width"], hc["scale"])

    jst_cfg = OracleConfig(float(cfg["jstar_rho"]))
    jstar = empirical_risk(test, lambda X: solve_batch(problem, conditional_probs(X, dgp), jst_cfg), problem)

    records, pto = [], None

    def finish(rec, policy, t0):
        _check_feasible(problem, policy, test.X, rec.method)
        rec.test_cost = empirical_risk(test, policy, problem, 0.0)
        rec.jstar = jstar
        rec.wall_time = time.perf_counter() - t0
        return rec

    # pto runs before iceo so its fit is timed under its own record
    for method in sorted(methods, key=lambda m: (m == "iceo", _method_order(m))):
        rec = ResultRecord(method, deg, n, sim)
        t0 = time.perf_counter()
        try:
            if method == "saa":
                records.append(finish(rec, saa_policy(train, problem, rho), t0))
            elif method == "pto":
                pto = pto or _fit_pto(ctx, train, val, h0, train_seed)
                rec.hyperparams = {"lr": pto[0], "epoch": pto[1].best_epoch}
                records.append(finish(rec, deployed_policy(pto[1].hypothesis, problem, oracle_cfg), t0))
            elif method == "pres-knn":
                grid = [k for k in cfg["benchmarks"]["knn_k"] if k <= len(train)] or [len(train)]
                scores = [empirical_risk(val, knn_policy(train, problem, rho, k), problem) for k in grid]
                k = grid[int(np.argmin(scores))]
                rec.hyperparams = {"k": k}
                records.append(finish(rec, knn_policy(train, problem, rho, k), t0))
            elif method == "pres-kernel":
                md = median_distance(train.X)
                grid = [f * md for f in cfg["benchmarks"]["kernel_factors"]]
                scores = [empirical_risk(val, kernel_policy(train, problem, rho, h), problem) for h in grid]
                i = int(np.argmin(scores))
                rec.hyperparams = {"bandwidth": grid[i], "factor": cfg["benchmarks"]["kernel_factors"][i]}
                records.append(finish(rec, kernel_policy(train, problem, rho, grid[i]), t0))
            elif method == "iceo":
                if cfg["train"]["init"] == "pto":
                    pto = pto or _fit_pto(ctx, train, val, h0, train_seed)
                    start = pto[1].hypothesis
                else:
                    start = h0
                best = None
                for lr in cfg["train"]["lrs"]:
                    res = train_iceo(train, start, ctx.surrogate, problem, _train_cfg(cfg, lr, train_seed),
                                     val, oracle_cfg)
                    if best is None or res.best_val < best[1].best_val:
                        best = (lr, res)
                rec.hyperparams = {"lr": best[0], "epoch": best[1].best_epoch, "init": cfg["train"]["init"]}
                records.append(finish(rec, deployed_policy(best[1].hypothesis, problem, oracle_cfg), t0))
            else:
                raise ValueError(f"unknown method {method!r}")
        except Exception as exc:  # record and continue
            rec.status = "failed"
            rec.error = f"{type(exc).__name__}: {exc}".replace("\n", " ")[:300]
            rec.wall_time = time.perf_counter() - t0
            records.append(rec)
    by = {r.method: r for r in records}
    if "iceo" in by and "pto" in by and by["iceo"].status == by["pto"].status == "ok" \
            and by["pto"].test_cost > 0:
        by["iceo"].improvement = improvement(by["pto"].test_cost, by["iceo"].test_cost)
    return records


def _cell_job(args):
    ctx, deg, n, sim, methods = args
    try:
        return run_cell(ctx, deg, n, sim, methods)
    except Exception as exc:  # data generation failure: fail every method of the cell
        msg = f"{type(exc).__name__}: {exc}".replace("\n", " ")[:300]
        return [ResultRecord(m, deg, n, sim, "failed", error=msg) for m in methods]


def build_context(cfg: ExperimentConfig, out_dir=None) -> CellContext:
    raw = cfg.raw
    problem = build_problem(raw["problem"])
    if problem.K != raw["dgp"]["K"]:
        raise ValueError("dgp.K must equal the number of problem scenarios")
    sur = None
    if "iceo" in raw["methods"]:
        spec = dict(raw["surrogate"])
        sur = fit_surrogate(problem, OracleConfig(raw["rho"]), spec, int(spec.pop("seed", 0)))
        sur.meta.pop("trace", None)
        if out_dir is not None:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            save_model(sur, Path(out_dir) / "surrogate.json")
    return CellContext(raw, problem, sur)


def run_cells(ctx: CellContext, cells, methods, jobs: int = 1) -> list[ResultRecord]:
    jobs_args = [(ctx, deg, n, sim, list(methods)) for deg, n, sim in cells]
    if jobs <= 1:
        out = [_cell_job(a) for a in jobs_args]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            out = list(pool.map(_cell_job, jobs_args))
    return sorted((r for rs in out for r in rs), key=_sort_key)


def run_experiment(cfg: ExperimentConfig, out_dir, jobs: int = 1, context: CellContext | None = None):
    """Full sweep over ``sizes x sims`` at ``dgp.deg``. Returns ``(path, records)``."""
    raw = cfg.raw
    ctx = context or build_context(cfg, out_dir)
    cells = [(int(raw["dgp"]["deg"]), int(n), sim) for n in raw["sizes"] for sim in range(int(raw["sims"]))]
    records = run_cells(ctx, cells, raw["methods"], jobs)
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    (Path(out_dir) / "config.yaml").write_text(cfg.dump())
    return write_results(records, out_dir), records


def run_misspec_study(cfg: ExperimentConfig, out_dir, jobs: int = 1, context: CellContext | None = None):
    """ICEO vs cross-entropy for every ``misspec.degs`` at ``misspec.n``."""
    raw = cfg.raw
    if raw["hypothesis"]["kind"] != "softmax-linear":
        raise ValueError("the misspecification study uses the softmax-linear class")
    cfg = cfg.with_overrides(methods=["iceo", "pto"])
    ctx = context or build_context(cfg, out_dir)
    n = int(raw["misspec"]["n"])
    cells = [(int(deg), n, sim) for deg in raw["misspec"]["degs"] for sim in range(int(raw["sims"]))]
    records = run_cells(ctx, cells, ["iceo", "pto"], jobs)
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    (Path(out_dir) / "config.yaml").write_text(cfg.dump())
    return write_results(records, out_dir), records


# ---------------------------------------------------------------------------
# plot data


def mean_stderr(values):
    v = np.asarray(values, dtype=float)
    if len(v) == 0:
        return math.nan, math.nan
    if len(v) == 1:
        return float(v[0]), math.nan
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(len(v)))


def _fmt(x):
    return "" if math.isnan(x) else repr(x)


def emit_plot_data(results_path, out_dir=None) -> dict:
    """Write ``plot_iid.csv`` (method x deg x n) and ``plot_mismatch.csv`` (deg)."""
    records, bad = read_results(results_path)
    out_dir = Path(out_dir or Path(results_path).parent)
    out_dir.mkdir(parents=True, exist_ok=True)
    ok = [r for r in records if r.status == "ok" and math.isfinite(r.test_cost)]
    groups: dict = {}
    for r in ok:
        groups.setdefault((r.method, r.deg, r.n), []).append(r.test_cost)
    jst: dict = {}
    for r in ok:
        if math.isfinite(r.jstar):
            jst.setdefault((r.deg, r.n), {})[r.sim] = r.jstar
    iid = out_dir / "plot_iid.csv"
    with iid.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "deg", "n", "count", "mean_cost", "stderr"])
        rows = [(m, dg, n, v) for (m, dg, n), v in groups.items()]
        rows += [("jstar", dg, n, list(s.values())) for (dg, n), s in jst.items()]
        for m, dg, n, v in sorted(rows, key=lambda t: (t[1], t[2], _method_order(t[0]), t[0])):
            mu, se = mean_stderr(v)
            w.writerow([m, dg, n, len(v), _fmt(mu), _fmt(se)])
    imp: dict = {}
    for r in ok:
        if r.method == "iceo" and math.isfinite(r.improvement):
            imp.setdefault(r.deg, []).append(r.improvement)
    mis = out_dir / "plot_mismatch.csv"
    with mis.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["deg", "count", "mean_improvement", "stderr"])
        for dg in sorted(imp):
            mu, se = mean_stderr(imp[dg])
            w.writerow([dg, len(imp[dg]), _fmt(mu), _fmt(se)])
    return {"iid": iid, "mismatch": mis, "skipped": bad, "failed": len(records) - len(ok)}
