"""ICEO training: surrogate-composed objective, chain-rule gradient, Adam loop, risks."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .datagen import Dataset
from .hypothesis import Hypothesis, mean_cross_entropy
from .oracle import OracleConfig, solve_batch
from .optim import Adam


class TrainingAborted(RuntimeError):
    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclass
class TrainConfig:
    rho: float = 0.01
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 500
    batch_size: int | None = 32
    patience: int = 50
    seed: int = 0
    # "deployed": unregularized cost of the exact-oracle policy on validation;
    # "objective": surrogate ICEO objective on validation
    val_metric: str = "deployed"

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if not self.lr > 0:
            raise ValueError("lr must be positive")


@dataclass
class TrainResult:
    hypothesis: Hypothesis
    train_trace: list = field(default_factory=list)
    val_trace: list = field(default_factory=list)
    best_epoch: int = 0
    best_val: float = np.inf


def _check_compat(h, surrogate, problem):
    if surrogate.K != problem.K or h.K != problem.K:
        raise ValueError(f"K mismatch: hypothesis {h.K}, surrogate {surrogate.K}, problem {problem.K}")
    if surrogate.d != problem.d:
        raise ValueError(f"d mismatch: surrogate {surrogate.d}, problem {problem.d}")


def iceo_objective(dataset: Dataset, h: Hypothesis, surrogate, problem, rho: float) -> float:
    """``mean_i c(w~(f(x_i)), xi_i) + rho * phi(w~(f(x_i)))``."""
    _check_compat(h, surrogate, problem)
    W = surrogate.predict(h.forward(dataset.X))
    return float(np.mean(problem.labeled_costs(W, dataset.labels) + rho * problem.phi.value(W)))


def _upstream(dataset, h, surrogate, problem, rho):
    F = h.forward(dataset.X)
    W = surrogate.predict(F)
    J = surrogate.jacobian(F)  # (n, d, K)
    n = len(dataset)
    g_cost = problem.labeled_grads(W, dataset.labels) / n
    g_reg = rho * problem.phi.grad(W) / n
    return J, g_cost, g_reg


def iceo_gradient(dataset: Dataset, h: Hypothesis, surrogate, problem, rho: float,
                  *, split: bool = False):
    """Parameter gradient of :func:`iceo_objective`.

    With ``split=True`` returns the cost-path and regularizer-path
    contributions separately (they sum to the full gradient).
    """
    _check_compat(h, surrogate, problem)
    J, g_cost, g_reg = _upstream(dataset, h, surrogate, problem, rho)
    if split:
        return (h.vjp(dataset.X, np.einsum("nd,ndk->nk", g_cost, J)),
                h.vjp(dataset.X, np.einsum("nd,ndk->nk", g_reg, J)))
    return h.vjp(dataset.X, np.einsum("nd,ndk->nk", g_cost + g_reg, J))


def empirical_risk(dataset: Dataset, policy, problem, rho: float = 0.0) -> float:
    """``mean_i c(pi(x_i), xi_i) + rho * phi(pi(x_i))``; decisions are projected first."""
    W = problem.region.project(np.atleast_2d(policy(dataset.X)))
    return float(np.mean(problem.labeled_costs(W, dataset.labels) + rho * problem.phi.value(W)))


def deployed_policy(h: Hypothesis, problem, oracle_cfg: OracleConfig):
    """``x -> w_rho(f(x))`` using the exact oracle."""
    return lambda X: solve_batch(problem, h.forward(X), oracle_cfg)


def surrogate_policy(h: Hypothesis, surrogate):
    return lambda X: surrogate.predict(h.forward(X))


def _batches(n, batch_size, rng):
    perm = rng.permutation(n)
    step = n if not batch_size else batch_size
    for start in range(0, n, step):
        yield perm[start:start + step]


def _adam_loop(train, val, h0, cfg, loss_and_grad, val_score):
    """Shared mini-batch Adam loop with best-on-validation selection and patience."""
    h = h0.copy()
    opt = Adam(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    rng = np.random.default_rng(cfg.seed)
    result = TrainResult(h0.copy())
    result.best_val = val_score(h) if val is not None else np.inf
    stale = 0
    for epoch in range(1, cfg.epochs + 1):
        for idx in _batches(len(train), cfg.batch_size, rng):
            loss, grads = loss_and_grad(train.subset(idx), h)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise TrainingAborted(f"non-finite loss at epoch {epoch}", result.train_trace)
            opt.step(h.params, grads)
        full_loss, _ = loss_and_grad(train, h)
        if not np.isfinite(full_loss):
            raise TrainingAborted(f"non-finite loss at epoch {epoch}", result.train_trace)
        result.train_trace.append(full_loss)
        if val is None:
            result.hypothesis = h.copy()
            result.best_epoch = epoch
            continue
        score = val_score(h)
        result.val_trace.append(score)
        if score < result.best_val:
            result.best_val = score
            result.best_epoch = epoch
            result.hypothesis = h.copy()
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return result


def train_iceo(train: Dataset, h0: Hypothesis, surrogate, problem, cfg: TrainConfig,
               val: Dataset | None = None, oracle_cfg: OracleConfig | None = None) -> TrainResult:
    """Minimize the surrogate ICEO objective with Adam.

    With a validation set the returned hypothesis is the best one seen
    (epoch 0 included) under ``cfg.val_metric``.
    """
    if len(train) == 0:
        raise ValueError("empty training set")
    _check_compat(h0, surrogate, problem)
    oracle_cfg = oracle_cfg or OracleConfig(cfg.rho)

    def loss_and_grad(batch, h):
        return (iceo_objective(batch, h, surrogate, problem, cfg.rho),
                iceo_gradient(batch, h, surrogate, problem, cfg.rho))

    if cfg.val_metric == "deployed":
        def val_score(h):
            return empirical_risk(val, deployed_policy(h, problem, oracle_cfg), problem, 0.0)
    elif cfg.val_metric == "objective":
        def val_score(h):
            return iceo_objective(val, h, surrogate, problem, cfg.rho)
    else:
        raise ValueError(f"unknown validation metric {cfg.val_metric!r}")
    return _adam_loop(train, val, h0, cfg, loss_and_grad, val_score)


def train_cross_entropy(train: Dataset, h0: Hypothesis, cfg: TrainConfig,
                        val: Dataset | None = None) -> TrainResult:
    """Two-step estimation: Adam on mean cross-entropy, selected on validation cross-entropy."""
    if len(train) == 0:
        raise ValueError("empty training set")

    def loss_and_grad(batch, h):
        return mean_cross_entropy(h, batch.X, batch.labels)

    def val_score(h):
        return mean_cross_entropy(h, val.X, val.labels)[0]

    return _adam_loop(train, val, h0, cfg, loss_and_grad, val_score)
