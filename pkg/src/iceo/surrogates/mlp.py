"""One-hidden-layer tanh regressor for the solution mapping, trained on MAPE."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..optim import Adam

MAPE_FLOOR = 1e-3


class TrainingDivergence(RuntimeError):
    def __init__(self, epoch: int, trace=None):
        super().__init__(f"training loss became non-finite at epoch {epoch}")
        self.epoch = epoch
        self.trace = trace


@dataclass
class MlpSurrogate:
    params: dict  # W1 (H,K), b1 (H,), W2 (d,H), b2 (d,)
    meta: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return self.params["W1"].shape[1]

    @property
    def d(self) -> int:
        return self.params["W2"].shape[0]

    @property
    def width(self) -> int:
        return self.params["W1"].shape[0]

    def _hidden(self, P):
        return np.tanh(np.atleast_2d(P) @ self.params["W1"].T + self.params["b1"])

    def predict(self, P) -> np.ndarray:
        return self._hidden(P) @ self.params["W2"].T + self.params["b2"]

    def jacobian(self, P) -> np.ndarray:
        """``(N, d, K)``: ``W2 diag(1 - tanh^2) W1``."""
        hid = self._hidden(P)
        return np.einsum("jh,nh,hk->njk", self.params["W2"], 1.0 - hid * hid, self.params["W1"])

    def evaluate(self, p):
        p = np.asarray(p, dtype=float)
        return self.predict(p[None])[0], self.jacobian(p[None])[0]

    def lipschitz_bound(self) -> float:
        # tanh is 1-Lipschitz
        return float(np.linalg.norm(self.params["W2"], 2) * np.linalg.norm(self.params["W1"], 2))


def init_mlp(K: int, d: int, width: int, rng, *, scale: float = 0.1, out_bias=None) -> MlpSurrogate:
    params = {
        "W1": rng.normal(scale=scale, size=(width, K)),
        "b1": rng.normal(scale=scale, size=width),
        "W2": rng.normal(scale=scale, size=(d, width)),
        "b2": np.zeros(d) if out_bias is None else np.array(out_bias, dtype=float),
    }
    return MlpSurrogate(params)


def mape(pred, target, floor: float = MAPE_FLOOR) -> float:
    return float(np.mean(np.abs(pred - target) / np.maximum(np.abs(target), floor)))


def _mape_grads(model: MlpSurrogate, P, W, floor):
    hid = model._hidden(P)
    pred = hid @ model.params["W2"].T + model.params["b2"]
    scale = np.maximum(np.abs(W), floor)
    loss = float(np.mean(np.abs(pred - W) / scale))
    g_out = np.sign(pred - W) / scale / W.size  # (n, d)
    g_hid = (g_out @ model.params["W2"]) * (1.0 - hid * hid)
    grads = {
        "W2": g_out.T @ hid,
        "b2": g_out.sum(axis=0),
        "W1": g_hid.T @ P,
        "b1": g_hid.sum(axis=0),
    }
    return loss, grads


def mlp_fit(P, W, width: int = 64, epochs: int = 300, lr: float = 1e-2, seed=0,
            *, batch_size: int = 64, floor: float = MAPE_FLOOR, init_scale: float = 1.0):
    """Fit by Adam on ``mean |pred - w| / max(|w|, floor)``.

    The output bias starts at the target mean so the relative loss has
    useful gradients from the first step. Returns the model; its
    ``meta["trace"]`` holds per-epoch training MAPE.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    W = np.asarray(W, dtype=float)
    if W.ndim == 1:
        W = W[:, None]
    rng = np.random.default_rng(seed)
    model = init_mlp(P.shape[1], W.shape[1], width, rng, scale=init_scale, out_bias=W.mean(axis=0))
    opt = Adam(lr)
    n = len(P)
    trace = []
    for epoch in range(epochs):
        perm = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = perm[start:start + batch_size]
            loss, grads = _mape_grads(model, P[idx], W[idx], floor)
            if not np.isfinite(loss):
                raise TrainingDivergence(epoch, trace)
            opt.step(model.params, grads)
        full = mape(model.predict(P), W, floor)
        if not np.isfinite(full):
            raise TrainingDivergence(epoch, trace)
        trace.append(full)
    model.meta.update(width=width, epochs=epochs, lr=lr, seed=seed, trace=trace)
    return model


def mlp_eval(model: MlpSurrogate, p):
    return model.evaluate(p)
