"""Comparison methods: SAA, two-step cross-entropy, prescriptive kNN / kernel."""
from __future__ import annotations

import warnings

import numpy as np

from .datagen import Dataset
from .oracle import OracleConfig, solve_batch
from .training import TrainConfig, deployed_policy, train_cross_entropy


def empirical_frequencies(dataset: Dataset, K: int) -> np.ndarray:
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    return np.bincount(dataset.labels, minlength=K) / len(dataset)


def saa_decision(dataset: Dataset, problem, rho: float) -> np.ndarray:
    p_hat = empirical_frequencies(dataset, problem.K)
    return solve_batch(problem, p_hat[None], OracleConfig(rho))[0]


def saa_policy(dataset: Dataset, problem, rho: float):
    w = saa_decision(dataset, problem, rho)
    return lambda X: np.tile(w, (len(np.atleast_2d(X)), 1))


def pto_train_and_decide(train: Dataset, h0, problem, rho: float, cfg: TrainConfig,
                         val: Dataset | None = None):
    """Fit by cross-entropy, deploy through the exact oracle. Returns ``(policy, result)``."""
    result = train_cross_entropy(train, h0, cfg, val)
    return deployed_policy(result.hypothesis, problem, OracleConfig(rho)), result


def _aggregate(weights: np.ndarray, labels: np.ndarray, K: int) -> np.ndarray:
    """Sum sample weights by scenario: ``(Q, n) -> (Q, K)``."""
    out = np.zeros((weights.shape[0], K))
    for k in range(K):
        out[:, k] = weights[:, labels == k].sum(axis=1)
    return out


def _sq_dists(Xq, X):
    return (np.sum(Xq * Xq, axis=1)[:, None] + np.sum(X * X, axis=1)[None, :] - 2 * Xq @ X.T).clip(0)


def knn_scenario_weights(x_query, dataset: Dataset, k: int, K: int) -> np.ndarray:
    """Uniform weights on the ``k`` nearest training points, aggregated by scenario.

    Ties at the k-th distance go to the lowest training index. Accepts a
    single query or a batch.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    if not 1 <= k <= len(dataset):
        raise ValueError(f"k must be in [1, {len(dataset)}]")
    Xq = np.atleast_2d(np.asarray(x_query, dtype=float))
    D = _sq_dists(Xq, dataset.X)
    nearest = np.argsort(D, axis=1, kind="stable")[:, :k]
    W = np.zeros_like(D)
    np.put_along_axis(W, nearest, 1.0 / k, axis=1)
    out = _aggregate(W, dataset.labels, K)
    return out[0] if np.ndim(x_query) == 1 else out


def kernel_scenario_weights(x_query, dataset: Dataset, bandwidth: float, K: int) -> np.ndarray:
    """Gaussian Nadaraya-Watson weights ``exp(-||x - x_i||^2 / (2 h^2))`` by scenario."""
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    Xq = np.atleast_2d(np.asarray(x_query, dtype=float))
    logw = -_sq_dists(Xq, dataset.X) / (2.0 * bandwidth**2)
    # shift by the row max so the nearest point always carries weight 1
    W = np.exp(logw - logw.max(axis=1, keepdims=True))
    tot = W.sum(axis=1, keepdims=True)
    bad = ~np.isfinite(tot[:, 0]) | (tot[:, 0] <= 0)
    if bad.any():
        warnings.warn("kernel weights underflowed; falling back to empirical frequencies")
        W[bad] = 1.0
        tot[bad] = len(dataset)
    out = _aggregate(W / tot, dataset.labels, K)
    return out[0] if np.ndim(x_query) == 1 else out


def knn_policy(dataset: Dataset, problem, rho: float, k: int):
    cfg = OracleConfig(rho)
    return lambda X: solve_batch(problem, knn_scenario_weights(np.atleast_2d(X), dataset, k, problem.K), cfg)


def kernel_policy(dataset: Dataset, problem, rho: float, bandwidth: float):
    cfg = OracleConfig(rho)
    return lambda X: solve_batch(
        problem, kernel_scenario_weights(np.atleast_2d(X), dataset, bandwidth, problem.K), cfg)


def median_distance(X) -> float:
    D = np.sqrt(_sq_dists(X, X))
    iu = np.triu_indices(len(X), 1)
    return float(np.median(D[iu])) if len(iu[0]) else 1.0


def improvement(cost_entropy: float, cost_iceo: float) -> float:
    """Relative cost reduction of ICEO over the cross-entropy baseline."""
    if not cost_entropy > 0:
        raise ValueError("baseline cost must be positive")
    return (cost_entropy - cost_iceo) / cost_entropy
