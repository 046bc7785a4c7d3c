"""Simplex arithmetic shared by every other module.

Probability vectors live on the unit simplex
``{p in R^K : p >= 0, sum(p) = 1}``; the helpers here construct them,
sample them, and enumerate the regular grid ``{alpha / s : alpha in N_0^K,
|alpha| = s}`` used by Bernstein interpolation.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np

RENORMALIZE_TOL = 1e-6
NEG_TOL = 1e-12


class SimplexError(ValueError):
    """Raised when a vector cannot be interpreted as a probability vector."""


def as_prob_vector(values, *, tol: float = RENORMALIZE_TOL) -> np.ndarray:
    """Validate ``values`` as a point of the simplex and return a float copy.

    Sums within ``tol`` of one are renormalized; larger deviations and
    negative entries below ``-1e-12`` are rejected. Tiny negative entries
    are clipped to zero.
    """
    p = np.array(values, dtype=float)
    if p.ndim != 1 or p.size < 2:
        raise SimplexError(f"expected a 1-d vector with K >= 2, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise SimplexError("probability vector has non-finite entries")
    if p.min() < -NEG_TOL:
        raise SimplexError(f"negative component {p.min():.3e}")
    p = np.clip(p, 0.0, None)
    total = p.sum()
    if abs(total - 1.0) > tol:
        raise SimplexError(f"components sum to {total!r}, not 1")
    return p / total


def is_prob_vector(p, *, tol: float = 1e-9) -> bool:
    p = np.asarray(p, dtype=float)
    return bool(np.all(np.isfinite(p)) and p.min() >= -NEG_TOL and abs(p.sum() - 1.0) <= tol)


def softmax(v) -> np.ndarray:
    """Numerically stable softmax along the last axis.

    Works on a single vector or a batch of row vectors.
    """
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("softmax input must be finite")
    z = v - v.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_jacobian(f: np.ndarray) -> np.ndarray:
    """Jacobian ``diag(f) - f f^T`` of softmax evaluated at output ``f``.

    ``f`` may be a batch ``(N, K)``; the result is then ``(N, K, K)``.
    """
    f = np.asarray(f, dtype=float)
    return f[..., :, None] * np.eye(f.shape[-1]) - f[..., :, None] * f[..., None, :]


def sample_simplex_uniform(K: int, n: int, seed=None) -> np.ndarray:
    """Draw ``n`` i.i.d. uniform points on the ``(K-1)``-simplex.

    Uses normalized exponential spacings, i.e. Dirichlet(1, ..., 1).
    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    if K < 2:
        raise ValueError(f"K must be >= 2, got {K}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    e = rng.standard_exponential((n, K))
    return e / e.sum(axis=1, keepdims=True)


def grid_size(K: int, s: int) -> int:
    """Number of multi-indices ``alpha in N_0^K`` with ``|alpha| = s``."""
    return comb(K + s - 1, K - 1)


def multi_indices(K: int, s: int) -> np.ndarray:
    """All ``alpha in N_0^K`` with ``sum(alpha) = s`` in lexicographic order.

    Stars-and-bars: every placement of ``K-1`` bars among ``s+K-1`` slots
    is one multi-index.
    """
    if K < 2 or s < 1:
        raise ValueError(f"need K >= 2 and s >= 1, got K={K}, s={s}")
    slots = s + K - 1
    rows = []
    for bars in combinations(range(slots), K - 1):
        edges = (-1, *bars, slots)
        rows.append([edges[i + 1] - edges[i] - 1 for i in range(K)])
    rows.sort()
    return np.array(rows, dtype=np.int64).reshape(-1, K)


@dataclass(frozen=True)
class SimplexGrid:
    """The regular grid ``I(K, s) / s`` on the simplex."""

    K: int
    order: int
    alphas: np.ndarray

    @property
    def points(self) -> np.ndarray:
        return self.alphas / self.order

    def __len__(self) -> int:
        return len(self.alphas)


def enumerate_grid(K: int, s: int) -> SimplexGrid:
    return SimplexGrid(K=K, order=s, alphas=multi_indices(K, s))


def tangent_basis(K: int) -> np.ndarray:
    """Orthonormal basis (K x K-1) of ``{v : sum(v) = 0}``."""
    q, _ = np.linalg.qr(np.eye(K) - 1.0 / K)
    return q[:, : K - 1]


class ScenarioSet:
    """Finite support ``{z_1, ..., z_K}`` of the uncertain parameter.

    Stored as a ``(K, s)`` array; rows must be pairwise distinct.
    """

    def __init__(self, scenarios):
        z = np.array(scenarios, dtype=float)
        if z.ndim == 1:
            z = z[:, None]
        if z.ndim != 2 or z.shape[0] < 2:
            raise ValueError(f"need at least two scenarios, got shape {z.shape}")
        if not np.all(np.isfinite(z)):
            raise ValueError("scenarios must be finite")
        if len(np.unique(z, axis=0)) != len(z):
            raise ValueError("scenarios must be pairwise distinct")
        z.setflags(write=False)
        self.values = z

    @property
    def K(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __getitem__(self, k):
        return self.values[k]

    def __len__(self) -> int:
        return self.K

    def __repr__(self) -> str:
        return f"ScenarioSet({self.values.tolist()})"
