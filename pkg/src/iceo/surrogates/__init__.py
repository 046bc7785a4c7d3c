"""Differentiable surrogates of the regularized solution mapping.

Every surrogate exposes ``predict(P) -> (N, d)`` and
``jacobian(P) -> (N, d, K)`` on batches of probability vectors, plus
``evaluate(p) -> (w, J)`` for a single point. Outputs are not projected
onto the feasible region.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..oracle import OracleConfig, solve_batch
from ..simplex import sample_simplex_uniform
from .bernstein import BernsteinModel, bernstein_eval, bernstein_fit
from .kernel import KernelModel, krr_eval, krr_fit
from .mlp import MlpSurrogate, TrainingDivergence, mape, mlp_eval, mlp_fit


@dataclass
class SurrogateSamples:
    P: np.ndarray  # (m, K) uniform on the simplex
    W: np.ndarray  # (m, d) oracle output plus sigma * N(0, I)
    sigma: float = 0.0

    def __len__(self) -> int:
        return len(self.P)


def generate_surrogate_samples(problem, cfg: OracleConfig, m: int, sigma: float = 0.0,
                               seed=None) -> SurrogateSamples:
    if m < 1:
        raise ValueError("m must be >= 1")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    rng = np.random.default_rng(seed)
    P = sample_simplex_uniform(problem.K, m, rng)
    W = solve_batch(problem, P, cfg)
    if sigma > 0:
        W = W + sigma * rng.standard_normal(W.shape)
    return SurrogateSamples(P, W, float(sigma))


class ExactOracle:
    """The exact mapping dressed as a surrogate; value-only (no Jacobian)."""

    kind = "exact"

    def __init__(self, problem, cfg: OracleConfig):
        self.problem = problem
        self.cfg = cfg

    @property
    def K(self) -> int:
        return self.problem.K

    @property
    def d(self) -> int:
        return self.problem.d

    def predict(self, P):
        return solve_batch(self.problem, P, self.cfg)

    def jacobian(self, P):
        raise NotImplementedError("the exact solution mapping is not differentiable")


class ConstantSurrogate:
    """Surrogate that ignores ``p``; useful as a baseline and in tests."""

    kind = "constant"

    def __init__(self, w, K: int):
        self.w = np.asarray(w, dtype=float)
        self._K = K

    @property
    def K(self) -> int:
        return self._K

    @property
    def d(self) -> int:
        return self.w.size

    def predict(self, P):
        return np.tile(self.w, (len(np.atleast_2d(P)), 1))

    def jacobian(self, P):
        return np.zeros((len(np.atleast_2d(P)), self.d, self.K))


def fit_surrogate(problem, cfg: OracleConfig, spec: dict, seed=0):
    """Build a surrogate from a config mapping with a ``kind`` key."""
    kind = spec.get("kind", "mlp")
    if kind == "bernstein":
        model = bernstein_fit(problem, cfg, int(spec.get("order", 8)))
    elif kind == "krr":
        samples = generate_surrogate_samples(problem, cfg, int(spec.get("m", 2000)),
                                             float(spec.get("sigma", 0.0)), seed)
        model = krr_fit(samples.P, samples.W, int(spec.get("degree", 3)),
                        float(spec.get("offset", 1.0)), float(spec.get("ridge", 1e-6)))
    elif kind == "mlp":
        samples = generate_surrogate_samples(problem, cfg, int(spec.get("m", 4000)),
                                             float(spec.get("sigma", 0.0)), seed)
        model = mlp_fit(samples.P, samples.W, int(spec.get("width", 64)),
                        int(spec.get("epochs", 300)), float(spec.get("lr", 1e-2)), seed,
                        batch_size=int(spec.get("batch_size", 64)))
    else:
        raise ValueError(f"unknown surrogate kind {kind!r}")
    model.meta.update(kind=kind, rho=cfg.rho, seed=seed, K=problem.K, d=problem.d)
    return model


__all__ = [
    "BernsteinModel", "KernelModel", "MlpSurrogate", "SurrogateSamples", "ExactOracle",
    "ConstantSurrogate", "TrainingDivergence", "bernstein_fit", "bernstein_eval", "krr_fit",
    "krr_eval", "mlp_fit", "mlp_eval", "mape", "generate_surrogate_samples", "fit_surrogate",
]
