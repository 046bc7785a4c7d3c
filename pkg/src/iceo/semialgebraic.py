"""Universal simplex membership of a linear hypothesis over a polyhedron.

For ``X = {x : A x >= a}`` (nonempty, bounded) the condition
``B x + b in simplex for all x in X`` holds iff the linear system below
is feasible in ``y_1..y_K, z, u >= 0`` (LP duality applied to
``min_x B_k x``, ``min_x 1^T B x`` and ``max_x 1^T B x``)::

    a^T y_k >= -b_k,         A^T y_k = B_k        (k = 1..K)
    a^T z   >= 1 - 1^T b,    A^T z   = B^T 1
    a^T u   >= -1 + 1^T b,   A^T u   = -B^T 1
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import linprog


class DomainError(ValueError):
    """The polyhedral feature domain is empty or unbounded."""


class LPFailure(RuntimeError):
    """The LP solver failed numerically (distinct from a proven infeasibility)."""


class Certificate(str, Enum):
    CERTIFIED = "certified"
    INFEASIBLE = "infeasible"


def _lp(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=(None, None)):
    return linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")


@dataclass
class PolyhedralDomain:
    """``X = {x in R^p : A x >= a}``; validated nonempty and bounded on construction."""

    A: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.a = np.asarray(self.a, dtype=float).ravel()
        if self.A.shape[0] != self.a.size:
            raise ValueError("A and a have different row counts")
        m, p = self.A.shape
        res = _lp(np.zeros(p), A_ub=-self.A, b_ub=-self.a)
        if res.status == 2:
            raise DomainError("feature domain is empty")
        if res.status != 0:
            raise LPFailure(f"phase-1 LP failed: {res.message}")
        lo, hi = np.empty(p), np.empty(p)
        for j in range(p):
            for sign, store in ((1.0, lo), (-1.0, hi)):
                c = np.zeros(p)
                c[j] = sign
                r = _lp(c, A_ub=-self.A, b_ub=-self.a)
                if r.status == 3:
                    raise DomainError(f"feature domain is unbounded along coordinate {j}")
                if r.status != 0:
                    raise LPFailure(f"bounding LP failed: {r.message}")
                store[j] = sign * r.fun
        self.lower, self.upper = lo, hi

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.A.shape[1]

    @classmethod
    def box(cls, lower, upper) -> "PolyhedralDomain":
        lower, upper = np.asarray(lower, float), np.asarray(upper, float)
        p = lower.size
        return cls(np.vstack([np.eye(p), -np.eye(p)]), np.concatenate([lower, -upper]))

    def contains(self, x, tol: float = 1e-9) -> bool:
        return bool(np.all(self.A @ np.asarray(x, float) >= self.a - tol))

    def chebyshev_center(self):
        """Center and radius of the largest inscribed ball."""
        norms = np.linalg.norm(self.A, axis=1)
        c = np.zeros(self.p + 1)
        c[-1] = -1.0
        # a_i - A_i x + r ||A_i|| <= 0
        A_ub = np.hstack([-self.A, norms[:, None]])
        res = _lp(c, A_ub=A_ub, b_ub=-self.a, bounds=[(None, None)] * self.p + [(0, None)])
        if res.status != 0:
            raise LPFailure(f"Chebyshev-center LP failed: {res.message}")
        return res.x[:-1], res.x[-1]


@dataclass
class SimplexMembershipSystem:
    """Linear system ``A_eq v = b_eq, A_ub v <= b_ub, v >= 0`` in ``v = (y_1..y_K, z, u)``."""

    domain: PolyhedralDomain
    K: int
    B: np.ndarray
    b: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    A_ub: np.ndarray
    b_ub: np.ndarray

    @property
    def n_aux(self) -> int:
        return self.A_eq.shape[1]

    @property
    def n_equalities(self) -> int:
        return self.A_eq.shape[0]

    @property
    def n_inequalities(self) -> int:
        return self.A_ub.shape[0]

    def blocks(self):
        """Names of the ``K + 2`` multiplier blocks, each of length ``m``."""
        return [f"y{k + 1}" for k in range(self.K)] + ["z", "u"]


def build_membership_system(domain: PolyhedralDomain, K: int, B=None, b=None) -> SimplexMembershipSystem:
    """Emit the duality system for ``(B, b)``; ``B=0, b=uniform`` when omitted."""
    m, p = domain.A.shape
    B = np.zeros((K, p)) if B is None else np.asarray(B, dtype=float)
    b = np.full(K, 1.0 / K) if b is None else np.asarray(b, dtype=float)
    if B.shape != (K, p) or b.shape != (K,):
        raise ValueError(f"expected B of shape {(K, p)} and b of shape {(K,)}")
    nb = K + 2
    A_eq = np.zeros((nb * p, nb * m))
    b_eq = np.zeros(nb * p)
    A_ub = np.zeros((nb, nb * m))
    b_ub = np.zeros(nb)
    ones_B = B.sum(axis=0)  # B^T 1
    rhs_eq = [B[k] for k in range(K)] + [ones_B, -ones_B]
    # a^T v >= r  <=>  -a^T v <= -r
    rhs_ge = [-b[k] for k in range(K)] + [1.0 - b.sum(), -1.0 + b.sum()]
    for j in range(nb):
        cols = slice(j * m, (j + 1) * m)
        A_eq[j * p:(j + 1) * p, cols] = domain.A.T
        b_eq[j * p:(j + 1) * p] = rhs_eq[j]
        A_ub[j, cols] = -domain.a
        b_ub[j] = -rhs_ge[j]
    return SimplexMembershipSystem(domain, K, B, b, A_eq, b_eq, A_ub, b_ub)


def check_feasibility(system: SimplexMembershipSystem, B=None, b=None) -> Certificate:
    """Certify ``(B, b)`` by LP feasibility of the duality system.

    ``B``/``b`` given here rebuild the system for a new hypothesis on the
    same domain.
    """
    if B is not None or b is not None:
        system = build_membership_system(
            system.domain, system.K,
            system.B if B is None else B, system.b if b is None else b)
    res = linprog(np.zeros(system.n_aux), A_ub=system.A_ub, b_ub=system.b_ub,
                  A_eq=system.A_eq, b_eq=system.b_eq, bounds=(0, None), method="highs")
    if res.status == 0:
        return Certificate.CERTIFIED
    if res.status == 2:
        return Certificate.INFEASIBLE
    raise LPFailure(f"LP solver status {res.status}: {res.message}")


def membership_violation(x, B, b) -> float:
    """Largest violation of ``Bx + b >= 0`` and ``1^T(Bx + b) = 1``."""
    v = np.asarray(B) @ x + b
    return float(max(-v.min(), abs(v.sum() - 1.0)))


def hit_and_run(domain: PolyhedralDomain, n: int, seed=None, burn_in: int = 50) -> np.ndarray:
    """Approximately uniform samples from the polytope via hit-and-run."""
    rng = np.random.default_rng(seed)
    x, r = domain.chebyshev_center()
    if not r > 1e-12:
        raise DomainError("feature domain has no interior point to start from")
    out = np.empty((n, domain.p))
    for i in range(burn_in + n):
        d = rng.normal(size=domain.p)
        d /= np.linalg.norm(d)
        # A (x + t d) >= a  <=>  t * (A d) >= a - A x
        Ad = domain.A @ d
        slack = domain.a - domain.A @ x  # <= 0 inside
        with np.errstate(divide="ignore", invalid="ignore"):
            t = slack / Ad
        t_lo = np.max(t[Ad > 1e-14], initial=-np.inf)
        t_hi = np.min(t[Ad < -1e-14], initial=np.inf)
        x = x + rng.uniform(t_lo, t_hi) * d
        if i >= burn_in:
            out[i - burn_in] = x
    return out


def falsify_by_sampling(domain: PolyhedralDomain, B, b, n_samples: int = 10_000, seed=None,
                        tol: float = 1e-9):
    """First sampled ``x in X`` with ``Bx + b`` outside the simplex, else ``None``."""
    B, b = np.asarray(B, float), np.asarray(b, float)
    X = hit_and_run(domain, n_samples, seed)
    V = X @ B.T + b
    bad = (V.min(axis=1) < -tol) | (np.abs(V.sum(axis=1) - 1.0) > tol)
    if bad.any():
        return X[int(np.argmax(bad))]
    return None


def random_certified_instance(domain: PolyhedralDomain, K: int, rng, margin: float = 0.9):
    """Random ``(B, b)`` mapping all of ``X`` into the simplex.

    Columns of ``B`` sum to zero so ``1^T(Bx + b) = 1`` everywhere; ``B``
    is then scaled so the worst vertex-free bound ``min_x (Bx + b)_k``
    (computed by LP) stays at ``(1 - margin) * b_k``.
    """
    b = rng.dirichlet(np.ones(K))
    B = rng.normal(size=(K, domain.p))
    B -= B.mean(axis=0)
    # most negative excursion of B_k x over X relative to b_k
    worst = 0.0
    for k in range(K):
        r = _lp(B[k], A_ub=-domain.A, b_ub=-domain.a)
        if r.status != 0:
            raise LPFailure(r.message)
        worst = max(worst, -r.fun / b[k])
    scale = margin / worst if worst > 0 else 1.0
    return B * scale, b


# ---------------------------------------------------------------------------
# polynomial program export


def _fmt(c: float) -> str:
    return repr(float(c))


def _term(coef, factors) -> str:
    body = " ".join(f"{v}^{e}" for v, e in factors if e)
    return f"  {_fmt(coef)} {body}".rstrip()


def surrogate_monomials(surrogate):
    """Monomial expansion ``[(coef (d,), exponents (K,)), ...]`` of a polynomial surrogate."""
    from math import comb, factorial, prod

    from .simplex import multi_indices
    from .surrogates import BernsteinModel, KernelModel

    if isinstance(surrogate, BernsteinModel):
        return [(surrogate._weights[g] * surrogate.coefficients[g], surrogate.alphas[g])
                for g in range(len(surrogate.alphas))]
    if isinstance(surrogate, KernelModel):
        s, c, Q, A = surrogate.degree, surrogate.offset, surrogate.support, surrogate.dual_coef
        terms = []
        for j in range(s + 1):
            betas = [np.zeros(Q.shape[1], dtype=np.int64)] if j == 0 else multi_indices(Q.shape[1], j)
            for beta in betas:
                mult = factorial(j) / prod(factorial(int(t)) for t in beta)
                qb = np.prod(Q ** beta, axis=1)
                coef = comb(s, j) * c ** (s - j) * mult * (qb @ A)
                terms.append((coef, np.asarray(beta)))
        return terms
    raise TypeError("only Bernstein and kernel-ridge surrogates are polynomial")


def export_polynomial_program(dataset, problem, surrogate, domain: PolyhedralDomain, rho: float,
                              path=None) -> str:
    """Write the polynomial ICEO program over linear hypotheses as line-oriented text.

    Variables: ``B_k_j``, ``b_k``, per-sample probabilities ``p_i_k`` and
    decisions ``w_i_j``, newsvendor epigraph variables ``t_i_j``, and the
    duality multipliers. Each constraint is a polynomial compared with 0.
    """
    from .problems import NewsvendorProblem

    K, p = problem.K, domain.p
    n, d = len(dataset), problem.d
    lines = ["ICEO-POLYPROG 1", f"# n={n} K={K} p={p} d={d} m={domain.m} rho={_fmt(rho)}"]
    var = []
    var += [f"B_{k}_{j}" for k in range(K) for j in range(p)] + [f"b_{k}" for k in range(K)]
    var += [f"p_{i}_{k}" for i in range(n) for k in range(K)]
    var += [f"w_{i}_{j}" for i in range(n) for j in range(d)]
    newsvendor = isinstance(problem, NewsvendorProblem)
    if newsvendor:
        var += [f"t_{i}_{j}" for i in range(n) for j in range(d)]
    blocks = [f"y{k}" for k in range(K)] + ["z", "u"]
    var += [f"{blk}_{r}" for blk in blocks for r in range(domain.m)]
    lines.append(f"VARIABLES {len(var)}")
    lines += [f"VAR {v}" for v in var]

    obj = []
    for i in range(n):
        for j in range(d):
            obj.append(_term(0.5 * rho / n, [(f"w_{i}_{j}", 2)]))
        if newsvendor:
            obj += [_term(1.0 / n, [(f"t_{i}_{j}", 1)]) for j in range(d)]
    if not newsvendor:
        raise TypeError("export currently supports the newsvendor cost only")
    lines.append(f"OBJECTIVE MIN {len(obj)}")
    lines += obj

    cons = []

    def add(name, sense, terms, const=0.0):
        body = list(terms)
        if const:
            body.append(f"  {_fmt(const)}")
        cons.append([f"CON {name} {sense} {len(body)}"] + body)

    z = problem.scenarios.values
    mono = surrogate_monomials(surrogate)
    for i in range(n):
        x = dataset.X[i]
        for k in range(K):
            add(f"link_{i}_{k}", "EQ",
                [_term(1.0, [(f"p_{i}_{k}", 1)])] + [_term(-x[j], [(f"B_{k}_{j}", 1)]) for j in range(p)]
                + [_term(-1.0, [(f"b_{k}", 1)])])
        for j in range(d):
            terms = [_term(1.0, [(f"w_{i}_{j}", 1)])]
            for coef, expo in mono:
                if coef[j] != 0.0:
                    terms.append(_term(-coef[j], [(f"p_{i}_{k}", int(e)) for k, e in enumerate(expo)]))
            add(f"surrogate_{i}_{j}", "EQ", terms)
            xi = z[dataset.labels[i], j]
            h, bb = problem.h[j], problem.b[j]
            add(f"hold_{i}_{j}", "GE", [_term(1.0, [(f"t_{i}_{j}", 1)]), _term(-h, [(f"w_{i}_{j}", 1)])], h * xi)
            add(f"short_{i}_{j}", "GE", [_term(1.0, [(f"t_{i}_{j}", 1)]), _term(bb, [(f"w_{i}_{j}", 1)])], -bb * xi)
    # duality system with (B, b) as variables
    for bi, blk in enumerate(blocks):
        for j in range(p):
            terms = [_term(domain.A[r, j], [(f"{blk}_{r}", 1)]) for r in range(domain.m) if domain.A[r, j]]
            if bi < K:
                terms.append(_term(-1.0, [(f"B_{bi}_{j}", 1)]))
            else:
                sign = -1.0 if blk == "z" else 1.0
                terms += [_term(sign, [(f"B_{k}_{j}", 1)]) for k in range(K)]
            add(f"dual_eq_{blk}_{j}", "EQ", terms)
        terms = [_term(domain.a[r], [(f"{blk}_{r}", 1)]) for r in range(domain.m) if domain.a[r]]
        if bi < K:
            add(f"dual_ge_{blk}", "GE", terms + [_term(1.0, [(f"b_{bi}", 1)])])
        elif blk == "z":
            add("dual_ge_z", "GE", terms + [_term(1.0, [(f"b_{k}", 1)]) for k in range(K)], -1.0)
        else:
            add("dual_ge_u", "GE", terms + [_term(-1.0, [(f"b_{k}", 1)]) for k in range(K)], 1.0)
        for r in range(domain.m):
            add(f"nonneg_{blk}_{r}", "GE", [_term(1.0, [(f"{blk}_{r}", 1)])])
    lines.append(f"CONSTRAINTS {len(cons)}")
    for c in cons:
        lines += c
    lines.append("END")
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def parse_polynomial_program(text: str) -> dict:
    """Read back the export format into plain Python structures."""
    rows = [r for r in text.splitlines() if r and not r.startswith("#")]
    if rows[0] != "ICEO-POLYPROG 1":
        raise ValueError("not an ICEO polynomial program")
    it = iter(rows[1:])

    def read_terms(count):
        terms = []
        for _ in range(count):
            parts = next(it).split()
            factors = {}
            for f in parts[1:]:
                name, e = f.split("^")
                factors[name] = int(e)
            terms.append((float(parts[0]), factors))
        return terms

    out = {"variables": [], "objective": [], "constraints": []}
    for row in it:
        head = row.split()
        if head[0] == "VARIABLES":
            out["variables"] = [next(it).split()[1] for _ in range(int(head[1]))]
        elif head[0] == "OBJECTIVE":
            out["objective"] = read_terms(int(head[2]))
        elif head[0] == "CONSTRAINTS":
            for _ in range(int(head[1])):
                _, name, sense, count = next(it).split()
                out["constraints"].append((name, sense, read_terms(int(count))))
        elif head[0] == "END":
            break
    return out


def evaluate_polynomial(terms, values: dict) -> float:
    return float(sum(c * np.prod([values[v] ** e for v, e in f.items()]) for c, f in terms))
