"""Conditional-distribution models ``f: R^p -> simplex`` with parameter gradients.

Two classes are provided, both composed with softmax:

* :class:`SoftmaxLinear`: ``softmax(B x + b)``
* :class:`SoftmaxMlp`: ``softmax(W2 tanh(W1 x + b1) + b2)``

Batch gradients go through :meth:`Hypothesis.vjp`, which maps an upstream
gradient on the probabilities to gradients on every parameter array.
"""
from __future__ import annotations

import numpy as np

from .simplex import softmax, softmax_jacobian

LOG_EPS = 1e-12


class Hypothesis:
    kind = "abstract"
    param_names: tuple[str, ...] = ()

    def __init__(self, params: dict):
        self.params = {k: np.array(params[k], dtype=float) for k in self.param_names}

    # -- subclass hooks
    def logits(self, X) -> np.ndarray:
        raise NotImplementedError

    def _logit_vjp(self, X, G_logits) -> dict:
        raise NotImplementedError

    # -- shared API
    @property
    def K(self) -> int:
        raise NotImplementedError

    @property
    def n_features(self) -> int:
        raise NotImplementedError

    @property
    def n_params(self) -> int:
        return sum(self.params[k].size for k in self.param_names)

    def _check_x(self, X):
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.n_features:
            raise ValueError(f"feature dimension {X.shape[1]}, expected {self.n_features}")
        if not np.all(np.isfinite(X)):
            raise ValueError("features must be finite")
        return X, single

    def forward(self, X) -> np.ndarray:
        X, single = self._check_x(X)
        F = softmax(self.logits(X))
        return F[0] if single else F

    def vjp(self, X, G) -> dict:
        """Parameter gradients of ``sum_i G[i] . f(x_i)``."""
        X, _ = self._check_x(X)
        F = softmax(self.logits(X))
        G = np.atleast_2d(G)
        G_logits = F * (G - np.sum(F * G, axis=1, keepdims=True))
        return self._logit_vjp(X, G_logits)

    def param_jacobian(self, x) -> np.ndarray:
        """``(K, n_params)`` Jacobian of ``f(x)`` in :meth:`flat_params` order."""
        x, _ = self._check_x(x)
        rows = []
        for k in range(self.K):
            e = np.zeros((1, self.K))
            e[0, k] = 1.0
            rows.append(self.flatten(self.vjp(x, e)))
        return np.array(rows)

    def softmax_differential(self, x) -> np.ndarray:
        return softmax_jacobian(self.forward(x))

    def flatten(self, arrays: dict) -> np.ndarray:
        return np.concatenate([np.ravel(arrays[k]) for k in self.param_names])

    def flat_params(self) -> np.ndarray:
        return self.flatten(self.params)

    def with_flat_params(self, theta) -> "Hypothesis":
        out, i = {}, 0
        for k in self.param_names:
            shape = self.params[k].shape
            size = int(np.prod(shape))
            out[k] = np.asarray(theta[i:i + size], dtype=float).reshape(shape)
            i += size
        return type(self)(out)

    def copy(self) -> "Hypothesis":
        return type(self)({k: v.copy() for k, v in self.params.items()})

    def __call__(self, X):
        return self.forward(X)


class SoftmaxLinear(Hypothesis):
    kind = "softmax-linear"
    param_names = ("B", "b")

    @classmethod
    def init(cls, K: int, p: int, seed=None, scale: float = 0.1) -> "SoftmaxLinear":
        rng = np.random.default_rng(seed)
        return cls({"B": rng.normal(scale=scale, size=(K, p)), "b": rng.normal(scale=scale, size=K)})

    @property
    def K(self):
        return self.params["B"].shape[0]

    @property
    def n_features(self):
        return self.params["B"].shape[1]

    def logits(self, X):
        return X @ self.params["B"].T + self.params["b"]

    def _logit_vjp(self, X, G_logits):
        return {"B": G_logits.T @ X, "b": G_logits.sum(axis=0)}


class SoftmaxMlp(Hypothesis):
    kind = "softmax-mlp"
    param_names = ("W1", "b1", "W2", "b2")

    @classmethod
    def init(cls, K: int, p: int, width: int = 32, seed=None, scale: float = 0.1) -> "SoftmaxMlp":
        rng = np.random.default_rng(seed)
        return cls({
            "W1": rng.normal(scale=scale, size=(width, p)),
            "b1": rng.normal(scale=scale, size=width),
            "W2": rng.normal(scale=scale, size=(K, width)),
            "b2": rng.normal(scale=scale, size=K),
        })

    @property
    def K(self):
        return self.params["W2"].shape[0]

    @property
    def n_features(self):
        return self.params["W1"].shape[1]

    def _hidden(self, X):
        return np.tanh(X @ self.params["W1"].T + self.params["b1"])

    def logits(self, X):
        return self._hidden(X) @ self.params["W2"].T + self.params["b2"]

    def _logit_vjp(self, X, G_logits):
        hid = self._hidden(X)
        g_hid = (G_logits @ self.params["W2"]) * (1.0 - hid * hid)
        return {
            "W1": g_hid.T @ X,
            "b1": g_hid.sum(axis=0),
            "W2": G_logits.T @ hid,
            "b2": G_logits.sum(axis=0),
        }


HYPOTHESIS_KINDS = {cls.kind: cls for cls in (SoftmaxLinear, SoftmaxMlp)}


def make_hypothesis(kind: str, K: int, p: int, seed=None, width: int = 32, scale: float = 0.1):
    if kind == "softmax-linear":
        return SoftmaxLinear.init(K, p, seed, scale)
    if kind == "softmax-mlp":
        return SoftmaxMlp.init(K, p, width, seed, scale)
    raise ValueError(f"unknown hypothesis kind {kind!r}")


def cross_entropy_loss(f_x, k: int):
    """``-log(f_k + eps)`` and its gradient with respect to ``f``."""
    f_x = np.asarray(f_x, dtype=float)
    loss = -np.log(f_x[k] + LOG_EPS)
    g = np.zeros_like(f_x)
    g[k] = -1.0 / (f_x[k] + LOG_EPS)
    return float(loss), g


def mean_cross_entropy(h: Hypothesis, X, labels):
    """Dataset-average cross-entropy and its parameter gradients."""
    X = np.atleast_2d(X)
    labels = np.asarray(labels)
    F = h.forward(X)
    n = len(labels)
    fk = F[np.arange(n), labels]
    loss = float(np.mean(-np.log(fk + LOG_EPS)))
    G = np.zeros_like(F)
    G[np.arange(n), labels] = -1.0 / (fk + LOG_EPS) / n
    return loss, h.vjp(X, G)
