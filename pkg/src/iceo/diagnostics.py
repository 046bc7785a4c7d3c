"""Numerical checks behind the ``oracle-check``, ``approx-error`` and ``semialg-verify`` commands."""
from __future__ import annotations

import numpy as np

from .oracle import OracleConfig, brute_force_solve, solve_batch, solve_regularized
from .semialgebraic import (Certificate, PolyhedralDomain, build_membership_system, check_feasibility,
                            falsify_by_sampling, random_certified_instance)
from .simplex import sample_simplex_uniform
from .surrogates import bernstein_fit, generate_surrogate_samples, krr_fit, mape, mlp_fit


def oracle_check(problem, rho: float, n_points: int = 20, grid_step: float = 0.25, seed=0) -> dict:
    """Sup-norm distance between the oracle and grid brute force at random ``p``."""
    P = sample_simplex_uniform(problem.K, n_points, seed)
    cfg = OracleConfig(rho)
    errs = [float(np.max(np.abs(solve_regularized(problem, p, cfg) - brute_force_solve(problem, p, rho, grid_step))))
            for p in P]
    return {"max_error": max(errs), "errors": errs, "grid_step": grid_step}


def lipschitz_check(problem, rho: float, n_pairs: int = 200, seed=0, slack: float = 1e-6) -> dict:
    """Worst ratio of ``||w(p) - w(p')||`` to the bound ``(L_c / rho) ||p - p'||``."""
    L = problem.lipschitz_estimate(seed=seed)
    rng = np.random.default_rng(seed)
    P = sample_simplex_uniform(problem.K, n_pairs, rng)
    Q = sample_simplex_uniform(problem.K, n_pairs, rng)
    cfg = OracleConfig(rho)
    WP, WQ = solve_batch(problem, P, cfg), solve_batch(problem, Q, cfg)
    lhs = np.linalg.norm(WP - WQ, axis=1)
    rhs = L / rho * np.linalg.norm(P - Q, axis=1) + slack
    return {"L_c": L, "violations": int(np.sum(lhs > rhs)), "max_ratio": float(np.max(lhs / rhs))}


def bernstein_errors(problem, rho: float, orders=(4, 8, 16), n_test: int = 500, seed=0) -> dict:
    """Sup-norm error over uniform test points for each order."""
    cfg = OracleConfig(rho)
    P = sample_simplex_uniform(problem.K, n_test, seed)
    W = solve_batch(problem, P, cfg)
    return {s: float(np.max(np.abs(bernstein_fit(problem, cfg, s).predict(P) - W))) for s in orders}


def krr_rmse(problem, rho: float, m: int, sigma: float, seed, degree: int = 3, offset: float = 1.0,
             ridge: float = 1e-6, n_test: int = 500) -> float:
    """Out-of-sample RMSE against the noiseless oracle on fresh uniform points."""
    cfg = OracleConfig(rho)
    S = generate_surrogate_samples(problem, cfg, m, sigma, seed)
    model = krr_fit(S.P, S.W, degree, offset, ridge)
    P = sample_simplex_uniform(problem.K, n_test, np.random.SeedSequence([int(seed), 7919]))
    return float(np.sqrt(np.mean((model.predict(P) - solve_batch(problem, P, cfg)) ** 2)))


def krr_errors(problem, rho: float, sizes=(500, 4000), sigma: float = 0.25, seeds=range(5),
               **kw) -> dict:
    """Mean RMSE over seeds for every sample size."""
    return {m: float(np.mean([krr_rmse(problem, rho, m, sigma, s, **kw) for s in seeds])) for m in sizes}


def mlp_heldout_mape(problem, rho: float, m: int = 4000, width: int = 64, epochs: int = 300,
                     lr: float = 1e-2, seed=0, n_test: int = 500) -> float:
    cfg = OracleConfig(rho)
    S = generate_surrogate_samples(problem, cfg, m, 0.0, seed)
    model = mlp_fit(S.P, S.W, width, epochs, lr, seed)
    P = sample_simplex_uniform(problem.K, n_test, np.random.SeedSequence([int(seed), 104729]))
    return mape(model.predict(P), solve_batch(problem, P, cfg))


def semialg_verify(n_certified: int = 50, n_violators: int = 10, n_samples: int = 10_000,
                   K: int = 4, p: int = 3, seed=0) -> dict:
    """Soundness over random certified instances and completeness on scaled violators.

    Domains are random boxes; violators come from boundary-tight certified
    instances with ``B`` scaled by 10.
    """
    rng = np.random.default_rng(seed)
    out = {"certified": 0, "sample_violations": 0, "violators_infeasible": 0, "violators_found": 0}
    for i in range(n_certified + n_violators):
        lo = rng.uniform(-2.0, 0.0, p)
        domain = PolyhedralDomain.box(lo, lo + rng.uniform(0.5, 3.0, p))
        system = build_membership_system(domain, K)
        if i < n_certified:
            B, b = random_certified_instance(domain, K, rng, margin=rng.uniform(0.2, 1.0))
            if check_feasibility(system, B, b) is Certificate.CERTIFIED:
                out["certified"] += 1
            if falsify_by_sampling(domain, B, b, n_samples, rng.integers(2**32)) is not None:
                out["sample_violations"] += 1
        else:
            B, b = random_certified_instance(domain, K, rng, margin=1.0)
            B = 10.0 * B
            if falsify_by_sampling(domain, B, b, n_samples, rng.integers(2**32)) is not None:
                out["violators_found"] += 1
            if check_feasibility(system, B, b) is Certificate.INFEASIBLE:
                out["violators_infeasible"] += 1
    out["n_certified"], out["n_violators"] = n_certified, n_violators
    return out
