"""Nominal problem families: scenario costs, feasible regions, regularizer.

Every cost evaluator is vectorized: ``scenario_costs(W)`` maps decisions of
shape ``(..., d)`` to all-scenario costs ``(..., K)`` and
``scenario_grads(W)`` returns the matching (sub)gradients ``(..., K, d)``.
"""
from __future__ import annotations

import numpy as np

from .simplex import ScenarioSet, sample_simplex_uniform


class ProjectionError(RuntimeError):
    """Projection failed to converge (infeasible or ill-conditioned region)."""


# ---------------------------------------------------------------------------
# feasible regions


def project_capped_simplex(y: np.ndarray, total: float) -> np.ndarray:
    """Project rows of ``y`` onto ``{w >= 0, sum(w) = total}`` (sort-based)."""
    y = np.atleast_2d(y)
    n, d = y.shape
    u = -np.sort(-y, axis=1)
    css = np.cumsum(u, axis=1) - total
    idx = np.arange(1, d + 1)
    cond = u - css / idx > 0
    r = d - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(n), r] / (r + 1)
    return np.maximum(y - theta[:, None], 0.0)


class FeasibleRegion:
    kind = "abstract"
    dim: int

    def project(self, y):
        raise NotImplementedError

    def member_mask(self, W, tol: float = 1e-8) -> np.ndarray:
        """Row-wise membership test for a batch of points."""
        W = np.atleast_2d(np.asarray(W, dtype=float))
        return np.linalg.norm(self.project(W) - W, axis=1) <= tol

    def contains(self, w, tol: float = 1e-8) -> bool:
        return bool(self.member_mask(w, tol)[0])

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def sample(self, n: int, rng) -> np.ndarray:
        raise NotImplementedError

    @property
    def diameter(self) -> float:
        """Sum of coordinate-wise diameters."""
        lo, hi = self.bounding_box()
        return float(np.sum(hi - lo))


class BudgetSimplex(FeasibleRegion):
    """``{w in R^d : w >= 0, sum(w) <= C}``."""

    kind = "budget-simplex"

    def __init__(self, d: int, C: float):
        if C <= 0:
            raise ValueError("budget C must be positive")
        self.dim = int(d)
        self.C = float(C)

    def project(self, y):
        y = np.asarray(y, dtype=float)
        flat = np.atleast_2d(y)
        w = np.maximum(flat, 0.0)
        over = w.sum(axis=1) > self.C
        if over.any():
            w[over] = project_capped_simplex(flat[over], self.C)
        return w.reshape(y.shape)

    def member_mask(self, W, tol: float = 1e-8):
        W = np.atleast_2d(np.asarray(W, dtype=float))
        return (W.min(axis=1) >= -tol) & (W.sum(axis=1) <= self.C + tol)

    def bounding_box(self):
        return np.zeros(self.dim), np.full(self.dim, self.C)

    def sample(self, n, rng):
        # uniform on the d+1 simplex, drop the slack coordinate
        p = sample_simplex_uniform(self.dim + 1, n, rng)
        return self.C * p[:, : self.dim]


class PortfolioRegion(FeasibleRegion):
    """``{(w, w0) : w in simplex_d, 0 <= w0 <= xi_bar}``; decision length d+1."""

    kind = "portfolio-box"

    def __init__(self, d: int, xi_bar: float):
        if xi_bar < 0:
            raise ValueError("xi_bar must be nonnegative")
        self.n_assets = int(d)
        self.dim = int(d) + 1
        self.xi_bar = float(xi_bar)

    def project(self, y):
        y = np.asarray(y, dtype=float)
        flat = np.atleast_2d(y)
        out = np.empty_like(flat)
        out[:, :-1] = project_capped_simplex(flat[:, :-1], 1.0)
        out[:, -1] = np.clip(flat[:, -1], 0.0, self.xi_bar)
        return out.reshape(y.shape)

    def member_mask(self, W, tol: float = 1e-8):
        W = np.atleast_2d(np.asarray(W, dtype=float))
        a, w0 = W[:, :-1], W[:, -1]
        return (
            (a.min(axis=1) >= -tol)
            & (np.abs(a.sum(axis=1) - 1.0) <= tol)
            & (w0 >= -tol)
            & (w0 <= self.xi_bar + tol)
        )

    def bounding_box(self):
        lo = np.zeros(self.dim)
        hi = np.ones(self.dim)
        hi[-1] = self.xi_bar
        return lo, hi

    def sample(self, n, rng):
        rng = np.random.default_rng(rng)
        w = sample_simplex_uniform(self.n_assets, n, rng)
        w0 = rng.uniform(0.0, self.xi_bar, size=(n, 1))
        return np.hstack([w, w0])


class FlowPolytope(FeasibleRegion):
    """``{w : A w = 0, l <= w <= u}`` with ``A`` a node-arc incidence matrix.

    Projection runs Dykstra's alternating projections between the null
    space of ``A`` and the box.
    """

    kind = "flow-polytope"

    def __init__(self, A, lower, upper, *, tol: float = 1e-10, max_sweeps: int = 100_000):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.dim = self.A.shape[1]
        self.lower = np.broadcast_to(np.asarray(lower, dtype=float), (self.dim,)).copy()
        self.upper = np.broadcast_to(np.asarray(upper, dtype=float), (self.dim,)).copy()
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")
        self.tol = tol
        self.max_sweeps = max_sweeps
        # orthogonal projector onto null(A); incidence matrices are rank deficient
        self._null_proj = np.eye(self.dim) - np.linalg.pinv(self.A) @ self.A

    def _project_one(self, y):
        x = y.copy()
        p = np.zeros_like(x)
        q = np.zeros_like(x)
        for _ in range(self.max_sweeps):
            a = self._null_proj @ (x + p)
            p = x + p - a
            x_new = np.clip(a + q, self.lower, self.upper)
            q = a + q - x_new
            if np.linalg.norm(x_new - x) < self.tol and np.linalg.norm(a - x_new) < 1e3 * self.tol:
                return x_new
            x = x_new
        raise ProjectionError(
            f"Dykstra did not converge in {self.max_sweeps} sweeps; region may be empty"
        )

    def project(self, y):
        y = np.asarray(y, dtype=float)
        flat = np.atleast_2d(y)
        out = np.array([self._project_one(row) for row in flat])
        return out.reshape(y.shape)

    def member_mask(self, W, tol: float = 1e-8):
        W = np.atleast_2d(np.asarray(W, dtype=float))
        return (
            np.all(W >= self.lower - tol, axis=1)
            & np.all(W <= self.upper + tol, axis=1)
            & (np.linalg.norm(W @ self.A.T, axis=1) <= tol)
        )

    def bounding_box(self):
        return self.lower.copy(), self.upper.copy()

    def sample(self, n, rng):
        rng = np.random.default_rng(rng)
        y = rng.uniform(self.lower, self.upper, size=(n, self.dim))
        return self.project(y)


def triangle_incidence() -> np.ndarray:
    """Incidence matrix of the directed 3-cycle 0->1->2->0 (rows: nodes)."""
    return np.array(
        [
            [-1.0, 0.0, 1.0],
            [1.0, -1.0, 0.0],
            [0.0, 1.0, -1.0],
        ]
    )


# ---------------------------------------------------------------------------
# regularizer


class SquaredNorm:
    """``phi(w) = 0.5 * ||w||^2``: nonnegative and 1-strongly convex."""

    strong_convexity = 1.0

    def value(self, w):
        w = np.asarray(w, dtype=float)
        return 0.5 * np.sum(w * w, axis=-1)

    def grad(self, w):
        return np.array(w, dtype=float)


# ---------------------------------------------------------------------------
# problems


class ProblemInstance:
    """Scenario set, per-scenario convex costs, feasible region and regularizer."""

    name = "abstract"
    smooth = False

    def __init__(self, scenarios, region: FeasibleRegion, phi=None):
        self.scenarios = scenarios if isinstance(scenarios, ScenarioSet) else ScenarioSet(scenarios)
        self.region = region
        self.phi = phi if phi is not None else SquaredNorm()

    @property
    def K(self) -> int:
        return self.scenarios.K

    @property
    def d(self) -> int:
        return self.region.dim

    def _check_w(self, W):
        W = np.asarray(W, dtype=float)
        if W.shape[-1] != self.d:
            raise ValueError(f"decision has dimension {W.shape[-1]}, expected {self.d}")
        return W

    def scenario_costs(self, W) -> np.ndarray:
        raise NotImplementedError

    def scenario_grads(self, W) -> np.ndarray:
        raise NotImplementedError

    def cost(self, w, k: int) -> tuple[float, np.ndarray]:
        """Cost of decision ``w`` under scenario ``k`` and a subgradient."""
        w = self._check_w(w)
        if not 0 <= k < self.K:
            raise IndexError(f"scenario index {k} out of range")
        return float(self.scenario_costs(w)[k]), self.scenario_grads(w)[k]

    def labeled_costs(self, W, labels) -> np.ndarray:
        """``c(W[i], z_{labels[i]})`` for a batch of decisions."""
        C = self.scenario_costs(W)
        return C[np.arange(len(C)), np.asarray(labels)]

    def labeled_grads(self, W, labels) -> np.ndarray:
        G = self.scenario_grads(W)
        return G[np.arange(len(G)), np.asarray(labels)]

    def lipschitz_estimate(self, n: int = 2000, seed=0) -> float:
        """Empirical ``max ||c(w1) - c(w2)||_2 / ||w1 - w2||_2`` over feasible pairs.

        Half the pairs are far apart, half are small perturbations so the
        estimate also sees local slopes.
        """
        rng = np.random.default_rng(seed)
        W1 = self.region.sample(n, rng)
        W2 = self.region.sample(n, rng)
        lo, hi = self.region.bounding_box()
        scale = 1e-3 * np.maximum(hi - lo, 1e-12)
        W3 = self.region.project(W1 + rng.normal(size=W1.shape) * scale)
        best = 0.0
        for A, B in ((W1, W2), (W1, W3)):
            num = np.linalg.norm(self.scenario_costs(A) - self.scenario_costs(B), axis=1)
            den = np.linalg.norm(A - B, axis=1)
            ok = den > 1e-12
            if ok.any():
                best = max(best, float(np.max(num[ok] / den[ok])))
        return best

    def describe(self) -> dict:
        return {"name": self.name, "K": self.K, "d": self.d, "region": self.region.kind}


class NewsvendorProblem(ProblemInstance):
    """Multi-item newsvendor with holding ``h``, stockout ``b`` and budget ``C``."""

    name = "newsvendor"
    smooth = False

    def __init__(self, scenarios, h, b, C: float, phi=None):
        scen = scenarios if isinstance(scenarios, ScenarioSet) else ScenarioSet(scenarios)
        d = scen.dim
        super().__init__(scen, BudgetSimplex(d, C), phi)
        self.h = np.broadcast_to(np.asarray(h, dtype=float), (d,)).copy()
        self.b = np.broadcast_to(np.asarray(b, dtype=float), (d,)).copy()
        if np.any(self.h <= 0) or np.any(self.b <= 0):
            raise ValueError("holding and stockout costs must be positive")

    def scenario_costs(self, W):
        W = self._check_w(W)
        diff = W[..., None, :] - self.scenarios.values  # (..., K, d)
        return np.sum(self.h * np.maximum(diff, 0.0) + self.b * np.maximum(-diff, 0.0), axis=-1)

    def scenario_grads(self, W):
        # kink (w == xi) gets subgradient 0
        W = self._check_w(W)
        diff = W[..., None, :] - self.scenarios.values
        return np.where(diff > 0, self.h, 0.0) - np.where(diff < 0, self.b, 0.0)

    def describe(self):
        out = super().describe()
        out.update(h=self.h.tolist(), b=self.b.tolist(), C=self.region.C)
        return out


class PortfolioProblem(ProblemInstance):
    """Mean-variance portfolio; decision is ``(w_1..w_d, w0)``."""

    name = "portfolio"
    smooth = True

    def __init__(self, scenarios, alpha: float = 1.0, xi_bar: float | None = None, phi=None):
        scen = scenarios if isinstance(scenarios, ScenarioSet) else ScenarioSet(scenarios)
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        if xi_bar is None:
            xi_bar = float(np.max(np.abs(scen.values)))
        super().__init__(scen, PortfolioRegion(scen.dim, xi_bar), phi)
        self.alpha = float(alpha)

    def scenario_costs(self, W):
        W = self._check_w(W)
        ret = np.einsum("...l,kl->...k", W[..., :-1], self.scenarios.values)
        return self.alpha * (ret - W[..., -1:]) ** 2 - ret

    def scenario_grads(self, W):
        W = self._check_w(W)
        z = self.scenarios.values
        ret = np.einsum("...l,kl->...k", W[..., :-1], z)
        resid = ret - W[..., -1:]
        g_w = (2 * self.alpha * resid - 1.0)[..., None] * z  # (..., K, d)
        g_w0 = (-2 * self.alpha * resid)[..., None]
        return np.concatenate([g_w, g_w0], axis=-1)

    def smoothness(self) -> float:
        """Upper bound on the Lipschitz constant of each scenario gradient."""
        z = self.scenarios.values
        norms = np.sum(z * z, axis=1) + 1.0
        return float(2 * self.alpha * norms.max())

    def describe(self):
        out = super().describe()
        out.update(alpha=self.alpha, xi_bar=self.region.xi_bar)
        return out


class FlowProblem(ProblemInstance):
    """Convex-cost flow with edge cost ``xi_i * (w_i - c0_i)^2``."""

    name = "flow"
    smooth = True

    def __init__(self, scenarios, c0, A, lower, upper, phi=None):
        scen = scenarios if isinstance(scenarios, ScenarioSet) else ScenarioSet(scenarios)
        if np.any(scen.values < 0):
            raise ValueError("flow scenarios must be nonnegative for convexity")
        region = FlowPolytope(A, lower, upper)
        if scen.dim != region.dim:
            raise ValueError("scenario dimension must equal the number of edges")
        super().__init__(scen, region, phi)
        self.c0 = np.broadcast_to(np.asarray(c0, dtype=float), (region.dim,)).copy()

    def scenario_costs(self, W):
        W = self._check_w(W)
        r = W[..., None, :] - self.c0
        return np.sum(self.scenarios.values * r * r, axis=-1)

    def scenario_grads(self, W):
        W = self._check_w(W)
        r = W[..., None, :] - self.c0
        return 2.0 * self.scenarios.values * r

    def smoothness(self) -> float:
        return float(2.0 * self.scenarios.values.max())

    def describe(self):
        out = super().describe()
        out.update(c0=self.c0.tolist())
        return out


def flow_cost(w, xi, c0):
    """Single-scenario edge cost and gradient, for callers without a problem object."""
    w, xi, c0 = (np.asarray(a, dtype=float) for a in (w, xi, c0))
    if np.any(xi < 0):
        raise ValueError("flow scenario must be nonnegative")
    r = w - c0
    return float(np.sum(xi * r * r)), 2.0 * xi * r


def newsvendor_cost(w, xi, h, b):
    w, xi, h, b = (np.asarray(a, dtype=float) for a in (w, xi, h, b))
    if w.shape != xi.shape:
        raise ValueError(f"dimension mismatch: {w.shape} vs {xi.shape}")
    diff = w - xi
    val = np.sum(h * np.maximum(diff, 0) + b * np.maximum(-diff, 0))
    g = np.where(diff > 0, h, 0.0) - np.where(diff < 0, b, 0.0)
    return float(val), g


def portfolio_cost(w, w0, xi, alpha):
    w, xi = np.asarray(w, dtype=float), np.asarray(xi, dtype=float)
    if w.shape != xi.shape:
        raise ValueError(f"dimension mismatch: {w.shape} vs {xi.shape}")
    ret = float(w @ xi)
    resid = ret - w0
    g = np.append((2 * alpha * resid - 1.0) * xi, -2 * alpha * resid)
    return alpha * resid**2 - ret, g


# two-item newsvendor with a shared capacity, the default benchmark instance
NEWSVENDOR_SCENARIOS = ((33.0, 15.0), (71.0, 4.0), (17.0, 47.0), (4.0, 43.0))
NEWSVENDOR_H = (1.0, 1.3)
NEWSVENDOR_B = (9.0, 8.0)
NEWSVENDOR_BUDGET = 50.0


def default_newsvendor() -> NewsvendorProblem:
    return NewsvendorProblem(NEWSVENDOR_SCENARIOS, NEWSVENDOR_H, NEWSVENDOR_B, NEWSVENDOR_BUDGET)


def triangle_flow(scenarios=((1.0, 2.0, 0.5), (0.5, 0.5, 3.0), (2.0, 1.0, 1.0)),
                  c0=(1.0, -1.0, 2.0), lower=0.0, upper=3.0) -> FlowProblem:
    """Circulation on the directed triangle; feasible set is ``{t(1,1,1)}``."""
    return FlowProblem(scenarios, c0, triangle_incidence(), lower, upper)


def build_problem(spec: dict) -> ProblemInstance:
    """Construct a problem from a config mapping (``kind`` plus parameters)."""
    kind = spec.get("kind", "newsvendor")
    if kind == "newsvendor":
        return NewsvendorProblem(
            spec.get("scenarios", NEWSVENDOR_SCENARIOS),
            spec.get("h", NEWSVENDOR_H),
            spec.get("b", NEWSVENDOR_B),
            spec.get("budget", NEWSVENDOR_BUDGET),
        )
    if kind == "portfolio":
        return PortfolioProblem(spec["scenarios"], spec.get("alpha", 1.0), spec.get("xi_bar"))
    if kind == "flow":
        if "incidence" not in spec:
            return triangle_flow(**{k: spec[k] for k in ("scenarios", "c0", "lower", "upper") if k in spec})
        return FlowProblem(spec["scenarios"], spec["c0"], spec["incidence"], spec["lower"], spec["upper"])
    raise ValueError(f"unknown problem kind {kind!r}")
