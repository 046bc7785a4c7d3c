"""Command-line entry point: ``iceo <subcommand> [--config PATH] [--seed N] [--out DIR] [--jobs N]``.

Exit codes: 0 success, 2 partial failure (failed cells or failed checks),
1 configuration error. ``ICEO_OUT_ROOT`` sets the default output root.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, default_config_text

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2


def _out_dir(args) -> Path:
    if args.out:
        return Path(args.out)
    return Path(os.environ.get("ICEO_OUT_ROOT", "runs")) / args.command


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if getattr(args, "sims", None) is not None:
        over["sims"] = args.sims
    if getattr(args, "sizes", None):
        over["sizes"] = args.sizes
    return cfg.with_overrides(**over) if over else cfg


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_oracle_check(args, cfg):
    from .diagnostics import lipschitz_check, oracle_check
    from .problems import build_problem

    problem = build_problem(cfg["problem"])
    res = {"oracle": oracle_check(problem, cfg["rho"], seed=cfg["seed"]),
           "lipschitz": {str(r): lipschitz_check(problem, r, seed=cfg["seed"]) for r in (0.01, 0.1, 1.0)}}
    ok = res["oracle"]["max_error"] <= res["oracle"]["grid_step"] and \
        all(v["violations"] == 0 for v in res["lipschitz"].values())
    res["pass"] = ok
    _write_json(_out_dir(args) / "oracle_check.json", res)
    print(f"oracle vs brute force: max error {res['oracle']['max_error']:.4g}; "
          f"Lipschitz violations {[v['violations'] for v in res['lipschitz'].values()]}")
    return EXIT_OK if ok else EXIT_PARTIAL


def cmd_approx_error(args, cfg):
    from .diagnostics import bernstein_errors, krr_errors, mlp_heldout_mape
    from .problems import build_problem

    problem, rho, seed = build_problem(cfg["problem"]), cfg["rho"], cfg["seed"]
    res = {}
    if args.kind in ("all", "bernstein"):
        res["bernstein_sup_error"] = {str(k): v for k, v in bernstein_errors(problem, rho, seed=seed).items()}
    if args.kind in ("all", "krr"):
        res["krr_rmse"] = {str(k): v for k, v in
                           krr_errors(problem, rho, seeds=range(seed, seed + 5)).items()}
    if args.kind in ("all", "mlp"):
        s = cfg["surrogate"]
        res["mlp_heldout_mape"] = mlp_heldout_mape(problem, rho, s["m"], s["width"], s["epochs"], s["lr"], seed)
    _write_json(_out_dir(args) / "approx_error.json", res)
    print(json.dumps(res, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_train(args, cfg):
    from .experiment import build_context, run_cell

    out = _out_dir(args)
    cfg = cfg.with_overrides(methods=["iceo", "pto"])
    ctx = build_context(cfg, out)
    n = int(cfg["sizes"][-1])
    records = run_cell(ctx, int(cfg["dgp"]["deg"]), n, 0, ["iceo", "pto"])
    out.mkdir(parents=True, exist_ok=True)
    with (out / "train_summary.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "n", "status", "test_cost", "hyperparams", "error"])
        for r in records:
            w.writerow([r.method, r.n, r.status, repr(r.test_cost), json.dumps(r.hyperparams, sort_keys=True),
                        r.error])
    for r in records:
        print(f"{r.method}: status={r.status} test_cost={r.test_cost:.4f} {r.hyperparams} {r.error}")
    return EXIT_OK if all(r.status == "ok" for r in records) else EXIT_PARTIAL


def _sweep(args, cfg, fn):
    from .experiment import emit_plot_data

    out = _out_dir(args)
    path, records = fn(cfg, out, jobs=args.jobs)
    emit_plot_data(path, out)
    failed = sum(r.status != "ok" for r in records)
    print(f"{len(records)} records written to {path}; {failed} failed")
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_bench(args, cfg):
    from .experiment import run_experiment

    return _sweep(args, cfg, run_experiment)


def cmd_misspec(args, cfg):
    from .experiment import run_misspec_study

    return _sweep(args, cfg, run_misspec_study)


def cmd_semialg_verify(args, cfg):
    from .diagnostics import semialg_verify

    res = semialg_verify(n_certified=args.instances, n_violators=args.violators,
                         n_samples=args.samples, K=cfg["dgp"]["K"], p=cfg["dgp"]["p"], seed=cfg["seed"])
    ok = (res["certified"] == res["n_certified"] and res["sample_violations"] == 0
          and res["violators_infeasible"] == res["n_violators"])
    res["pass"] = ok
    out = _out_dir(args)
    _write_json(out / "semialg_verify.json", res)
    if args.export:
        _export_program(cfg, out / "program.txt", args.export_n)
    print(json.dumps(res, sort_keys=True))
    return EXIT_OK if ok else EXIT_PARTIAL


def _export_program(cfg, path, n):
    from .datagen import DgpConfig, generate_dataset
    from .oracle import OracleConfig
    from .problems import build_problem
    from .semialgebraic import PolyhedralDomain, export_polynomial_program
    from .surrogates import fit_surrogate

    problem = build_problem(cfg["problem"])
    d = cfg["dgp"]
    data = generate_dataset(n, DgpConfig(p=d["p"], M=d["M"], K=d["K"], seed=cfg["seed"]), cfg["seed"])
    r = 3.0 * np.sqrt(d["M"])
    domain = PolyhedralDomain.box(-r * np.ones(d["p"]), r * np.ones(d["p"]))
    sur = fit_surrogate(problem, OracleConfig(cfg["rho"]), {"kind": "bernstein", "order": 4})
    path.parent.mkdir(parents=True, exist_ok=True)
    export_polynomial_program(data, problem, sur, domain, cfg["rho"], path)


def cmd_plot_data(args, cfg):
    from .experiment import emit_plot_data

    if not args.results:
        raise ConfigError("plot-data needs --results PATH")
    res = emit_plot_data(args.results, args.out)
    print(f"wrote {res['iid']} and {res['mismatch']}; skipped {res['skipped']} malformed, "
          f"{res['failed']} failed records")
    return EXIT_PARTIAL if res["skipped"] else EXIT_OK


COMMANDS = {
    "oracle-check": cmd_oracle_check,
    "approx-error": cmd_approx_error,
    "train": cmd_train,
    "bench": cmd_bench,
    "misspec": cmd_misspec,
    "semialg-verify": cmd_semialg_verify,
    "plot-data": cmd_plot_data,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="iceo", description=__doc__.splitlines()[0])
    parser.add_argument("--print-default-config", action="store_true",
                        help="print the built-in YAML defaults and exit")
    sub = parser.add_subparsers(dest="command")
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML config file (defaults are built in)")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for simulation cells")
        if name in ("bench", "misspec", "train"):
            p.add_argument("--sims", type=int, help="override the number of simulations")
            p.add_argument("--sizes", type=int, nargs="+", help="override training-set sizes")
        if name == "approx-error":
            p.add_argument("--kind", choices=("all", "bernstein", "krr", "mlp"), default="all")
        if name == "semialg-verify":
            p.add_argument("--instances", type=int, default=50)
            p.add_argument("--violators", type=int, default=10)
            p.add_argument("--samples", type=int, default=10_000)
            p.add_argument("--export", action="store_true", help="also write the polynomial program")
            p.add_argument("--export-n", type=int, default=20, help="samples in the exported program")
        if name == "plot-data":
            p.add_argument("--results", help="results.csv to summarize")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_default_config:
        sys.stdout.write(default_config_text())
        return EXIT_OK
    if not args.command:
        parser.print_help()
        return EXIT_CONFIG
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = _load_config(args)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
