"""Regularized optimal-solution mapping ``w_rho(p)``.

``w_rho(p) = argmin_{w in S} sum_k p_k c_k(w) + rho * phi(w)``

Three solvers sit behind :func:`solve_regularized`:

* ``"exact"``: dual bisection on the budget multiplier for the newsvendor
  with ``phi = 0.5||w||^2``; each coordinate then has a closed form.
* ``"pgd"``: fixed-step projected gradient for smooth costs.
* ``"subgradient"``: projected subgradient with step ``1/(rho t)`` and
  iterate averaging, the fallback for nonsmooth costs.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np

from .problems import NewsvendorProblem, ProblemInstance, SquaredNorm
from .simplex import as_prob_vector

MAX_GRID_POINTS = 10**8


class ConvergenceWarning(UserWarning):
    """The iterative oracle hit its iteration cap before meeting ``tol``."""

    def __init__(self, step_norm: float, iterations: int):
        super().__init__(
            f"oracle stopped after {iterations} iterations with last step norm {step_norm:.3e}"
        )
        self.step_norm = step_norm
        self.iterations = iterations


@dataclass(frozen=True)
class OracleConfig:
    rho: float
    tol: float = 1e-8
    max_iters: int = 50_000
    method: str = "auto"

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.method not in ("auto", "exact", "pgd", "subgradient"):
            raise ValueError(f"unknown oracle method {self.method!r}")


@dataclass
class OracleInfo:
    converged: bool
    iterations: int
    step_norm: float
    method: str


def regularized_objective(problem: ProblemInstance, p, W, rho: float):
    """``sum_k p_k c_k(W) + rho * phi(W)``; ``W`` may be a batch."""
    return problem.scenario_costs(W) @ np.asarray(p, dtype=float) + rho * problem.phi.value(W)


def expected_cost(problem: ProblemInstance, p, w, *, tol: float = 1e-6) -> float:
    """``sum_k p_k c_k(w)`` for a feasible decision ``w``."""
    p = as_prob_vector(p)
    w = np.asarray(w, dtype=float)
    if not problem.region.contains(w, tol):
        raise ValueError("decision is not feasible")
    return float(problem.scenario_costs(w) @ p)


def _resolve_method(problem, method):
    if method != "auto":
        return method
    if _has_exact(problem):
        return "exact"
    return "pgd" if problem.smooth else "subgradient"


def _has_exact(problem) -> bool:
    return isinstance(problem, NewsvendorProblem) and type(problem.phi) is SquaredNorm


# ---------------------------------------------------------------------------
# exact newsvendor solver


def _newsvendor_unbudgeted(P, z_sorted, order, h, b, rho, lam):
    """Per-coordinate minimizer of ``g_l(w) + lam * w`` over ``w >= 0``.

    ``g_l`` is the p-weighted newsvendor cost of item ``l`` plus
    ``rho/2 w^2``. Its right derivative is
    ``rho w + (h+b) F(w) - b`` with ``F`` the CDF of the demand, so the
    minimizer is the smallest ``w`` where that derivative reaches ``-lam``.
    On the j-th piece of ``F`` the candidate is
    ``max(t_j, (b - lam - (h+b) F_j) / rho)``; the minimum over pieces is
    the answer.
    """
    N = P.shape[0]
    d = z_sorted.shape[1]
    lam = np.broadcast_to(lam, (N,))
    W = np.empty((N, d))
    for l in range(d):
        F = np.concatenate([np.zeros((N, 1)), np.cumsum(P[:, order[:, l]], axis=1)], axis=1)
        starts = np.concatenate([[-np.inf], z_sorted[:, l]])
        r = (b[l] - lam[:, None] - (h[l] + b[l]) * F) / rho
        W[:, l] = np.maximum(np.min(np.maximum(starts, r), axis=1), 0.0)
    return W


def _solve_newsvendor_exact(problem: NewsvendorProblem, P, rho, iters: int = 200):
    P = np.atleast_2d(P)
    z = problem.scenarios.values
    order = np.argsort(z, axis=0, kind="stable")
    z_sorted = np.take_along_axis(z, order, axis=0)
    h, b, C = problem.h, problem.b, problem.region.C
    W = _newsvendor_unbudgeted(P, z_sorted, order, h, b, rho, 0.0)
    over = W.sum(axis=1) > C
    if over.any():
        Po = P[over]
        lo = np.zeros(len(Po))
        hi = np.full(len(Po), float(b.max()))
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            tot = _newsvendor_unbudgeted(Po, z_sorted, order, h, b, rho, mid).sum(axis=1)
            big = tot > C
            lo = np.where(big, mid, lo)
            hi = np.where(big, hi, mid)
            if np.all(hi - lo <= 1e-15 * np.maximum(hi, 1.0)):
                break
        Wo = _newsvendor_unbudgeted(Po, z_sorted, order, h, b, rho, hi)
        # hi is on the feasible side; remove rounding excess
        excess = np.maximum(Wo.sum(axis=1) - C, 0.0)
        Wo = np.maximum(Wo - excess[:, None] / Wo.shape[1], 0.0)
        W[over] = Wo
    return W


# ---------------------------------------------------------------------------
# iterative solvers


def _solve_pgd(problem, p, rho, tol, max_iters, w0):
    L = problem.smoothness() + rho * problem.phi.strong_convexity
    step = 1.0 / L
    w = w0
    delta = np.inf
    for t in range(1, max_iters + 1):
        g = p @ problem.scenario_grads(w) + rho * problem.phi.grad(w)
        w_new = problem.region.project(w - step * g)
        delta = float(np.linalg.norm(w_new - w))
        w = w_new
        if delta <= tol:
            return w, OracleInfo(True, t, delta, "pgd")
    return w, OracleInfo(False, max_iters, delta, "pgd")


def _solve_subgradient(problem, p, rho, tol, max_iters, w0):
    w = w0
    avg = w0.copy()
    delta = np.inf
    for t in range(1, max_iters + 1):
        g = p @ problem.scenario_grads(w) + rho * problem.phi.grad(w)
        w = problem.region.project(w - g / (rho * t))
        new_avg = avg + (w - avg) / (t + 1)
        delta = float(np.linalg.norm(new_avg - avg))
        avg = new_avg
        if delta <= tol and t > 10:
            return avg, OracleInfo(True, t, delta, "subgradient")
    return avg, OracleInfo(False, max_iters, delta, "subgradient")


def solve_regularized(problem: ProblemInstance, p, cfg: OracleConfig, *, w0=None,
                      full_output: bool = False):
    """Compute ``w_rho(p)`` for a single probability vector.

    Returns ``w``, or ``(w, OracleInfo)`` with ``full_output=True``. When an
    iterative solver exhausts ``max_iters`` a :class:`ConvergenceWarning`
    carrying the last step norm is issued and the last iterate returned.
    """
    p = as_prob_vector(p)
    if p.size != problem.K:
        raise ValueError(f"p has {p.size} entries, problem has K={problem.K}")
    method = _resolve_method(problem, cfg.method)
    if method == "exact":
        if not _has_exact(problem):
            raise ValueError("exact solver only available for the newsvendor with squared-norm phi")
        w = _solve_newsvendor_exact(problem, p[None], cfg.rho)[0]
        info = OracleInfo(True, 0, 0.0, "exact")
    else:
        start = problem.region.project(np.zeros(problem.d)) if w0 is None else np.asarray(w0, float)
        solver = _solve_pgd if method == "pgd" else _solve_subgradient
        w, info = solver(problem, p, cfg.rho, cfg.tol, cfg.max_iters, start)
        if not info.converged:
            warnings.warn(ConvergenceWarning(info.step_norm, info.iterations), stacklevel=2)
    return (w, info) if full_output else w


def solve_batch(problem: ProblemInstance, P, cfg: OracleConfig, *, warm_start: bool = True):
    """``w_rho`` for every row of ``P``; iterative solvers warm-start along the rows."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    method = _resolve_method(problem, cfg.method)
    if method == "exact":
        if np.any(P < -1e-12) or np.any(np.abs(P.sum(axis=1) - 1) > 1e-6):
            raise ValueError("rows of P must be probability vectors")
        return _solve_newsvendor_exact(problem, np.clip(P, 0, None), cfg.rho)
    out = np.empty((len(P), problem.d))
    prev = None
    for i, p in enumerate(P):
        out[i] = solve_regularized(problem, p, cfg, w0=prev if warm_start else None)
        prev = out[i]
    return out


def kkt_residual(problem: ProblemInstance, p, w, rho: float) -> float:
    """Natural residual ``||w - proj(w - grad)||`` of a smooth regularized problem."""
    g = np.asarray(p) @ problem.scenario_grads(w) + rho * problem.phi.grad(w)
    return float(np.linalg.norm(w - problem.region.project(w - g)))


def brute_force_solve(problem: ProblemInstance, p, rho: float, grid_step: float,
                      *, chunk: int = 1_000_000, member_tol: float = 1e-9):
    """Exhaustive minimizer of the regularized objective over a feasible grid.

    The grid is the lattice ``lo + grid_step * N_0^d`` inside the region's
    bounding box; only feasible points are scored.
    """
    p = as_prob_vector(p)
    lo, hi = problem.region.bounding_box()
    if problem.d > 3:
        raise ValueError("brute force is limited to d <= 3")
    axes = [lo[j] + grid_step * np.arange(int(np.floor((hi[j] - lo[j]) / grid_step + 1e-9)) + 1)
            for j in range(problem.d)]
    total = int(np.prod([len(a) for a in axes]))
    if total > MAX_GRID_POINTS:
        raise ValueError(f"grid has {total} points, limit is {MAX_GRID_POINTS}")
    best_val, best_w = np.inf, None
    # iterate over the first axis in slabs to bound memory
    rest = np.array(list(itertools.product(*axes[1:]))) if problem.d > 1 else np.zeros((1, 0))
    slab = max(1, chunk // max(len(rest), 1))
    for start in range(0, len(axes[0]), slab):
        first = axes[0][start:start + slab]
        W = np.hstack([np.repeat(first, len(rest))[:, None], np.tile(rest, (len(first), 1))])
        W = W[problem.region.member_mask(W, member_tol)]
        if len(W) == 0:
            continue
        vals = regularized_objective(problem, p, W, rho)
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val, best_w = float(vals[i]), W[i].copy()
    if best_w is None:
        raise ValueError("no feasible grid point")
    return best_w
