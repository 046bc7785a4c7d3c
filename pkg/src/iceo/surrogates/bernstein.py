"""Bernstein interpolation of the solution mapping on the simplex.

``B_s(w)(p) = sum_{alpha in I(K,s)} w(alpha/s) * s!/alpha! * p^alpha``,
applied to each output coordinate separately.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial, prod

import numpy as np

from ..oracle import OracleConfig, solve_batch
from ..simplex import enumerate_grid, grid_size

MAX_BERNSTEIN_GRID = 10**6


def multinomial_coefficients(alphas: np.ndarray) -> np.ndarray:
    s = int(alphas[0].sum())
    return np.array([factorial(s) // prod(factorial(int(a)) for a in row) for row in alphas], dtype=float)


def monomials(P: np.ndarray, alphas: np.ndarray) -> np.ndarray:
    """``p^alpha`` for every row of ``P`` and every multi-index: ``(N, G)``."""
    P = np.atleast_2d(P)
    out = np.ones((P.shape[0], alphas.shape[0]))
    for k in range(P.shape[1]):
        out *= P[:, k : k + 1] ** alphas[:, k]
    return out


def monomial_gradients(P: np.ndarray, alphas: np.ndarray) -> np.ndarray:
    """``d p^alpha / d p_k`` as an ``(N, G, K)`` array."""
    P = np.atleast_2d(P)
    N, K = P.shape
    pows = np.stack([P[:, k : k + 1] ** alphas[:, k] for k in range(K)], axis=-1)  # (N,G,K)
    out = np.empty((N, alphas.shape[0], K))
    for k in range(K):
        others = np.prod(np.delete(pows, k, axis=-1), axis=-1)
        a = alphas[:, k]
        lower = P[:, k : k + 1] ** np.maximum(a - 1, 0)
        out[:, :, k] = np.where(a > 0, a * lower, 0.0) * others
    return out


@dataclass
class BernsteinModel:
    order: int
    alphas: np.ndarray
    coefficients: np.ndarray  # (G, d): w(alpha / s)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self._weights = multinomial_coefficients(self.alphas)
        if len(self.coefficients) != len(self.alphas):
            raise ValueError("coefficient table does not match the grid")

    @property
    def K(self) -> int:
        return self.alphas.shape[1]

    @property
    def d(self) -> int:
        return self.coefficients.shape[1]

    def basis(self, P) -> np.ndarray:
        return monomials(P, self.alphas) * self._weights

    def predict(self, P) -> np.ndarray:
        return self.basis(P) @ self.coefficients

    def jacobian(self, P) -> np.ndarray:
        """``(N, d, K)`` Jacobian of the polynomial extension to ``R^K``."""
        dM = monomial_gradients(P, self.alphas) * self._weights[:, None]
        return np.einsum("ngk,gj->njk", dM, self.coefficients)

    def evaluate(self, p):
        p = np.asarray(p, dtype=float)
        return self.predict(p[None])[0], self.jacobian(p[None])[0]


def bernstein_fit(problem, cfg: OracleConfig, s: int) -> BernsteinModel:
    """Tabulate the exact oracle on the order-``s`` simplex grid."""
    size = grid_size(problem.K, s)
    if size > MAX_BERNSTEIN_GRID:
        raise ValueError(f"Bernstein grid of order {s} has {size} points (limit {MAX_BERNSTEIN_GRID})")
    grid = enumerate_grid(problem.K, s)
    table = solve_batch(problem, grid.points, cfg, warm_start=True)
    return BernsteinModel(s, grid.alphas, table, meta={"rho": cfg.rho, "problem": problem.name})


def bernstein_eval(model: BernsteinModel, p):
    return model.evaluate(p)
