"""Synthetic contextual data: Gaussian features, softmax-of-power labels."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .simplex import softmax


@dataclass
class DgpConfig:
    p: int = 3
    M: float = 5.0
    K: int = 4
    B_star: np.ndarray | None = None
    b_star: np.ndarray | None = None
    deg: int = 1
    seed: int = 0
    B_max: int = 150

    def __post_init__(self):
        if self.deg < 1:
            raise ValueError("deg must be a positive integer")
        if not self.M > 0:
            raise ValueError("M must be positive")
        rng = np.random.default_rng(self.seed)
        if self.B_star is None:
            self.B_star = rng.integers(0, self.B_max + 1, size=(self.K, self.p)).astype(float)
        self.B_star = np.asarray(self.B_star, dtype=float)
        if self.b_star is None:
            self.b_star = np.zeros(self.K)
        self.b_star = np.asarray(self.b_star, dtype=float)
        if self.B_star.shape != (self.K, self.p) or self.b_star.shape != (self.K,):
            raise ValueError("B_star / b_star shapes do not match (K, p)")


@dataclass
class Dataset:
    X: np.ndarray
    labels: np.ndarray  # 0-based scenario indices
    probs: np.ndarray | None = None  # true conditional probabilities, when known
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.X) != len(self.labels):
            raise ValueError("features and labels differ in length")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, idx) -> "Dataset":
        probs = None if self.probs is None else self.probs[idx]
        return Dataset(self.X[idx], self.labels[idx], probs, dict(self.meta))

    def split(self, val_fraction: float, seed=None) -> tuple["Dataset", "Dataset"]:
        """Random disjoint train/validation split."""
        rng = np.random.default_rng(seed)
        perm = rng.permutation(len(self))
        n_val = int(round(val_fraction * len(self)))
        return self.subset(np.sort(perm[n_val:])), self.subset(np.sort(perm[:n_val]))

    def frequencies(self, K: int) -> np.ndarray:
        return np.bincount(self.labels, minlength=K) / len(self)

    def check_labels(self, K: int) -> None:
        if len(self) and (self.labels.min() < 0 or self.labels.max() >= K):
            raise ValueError("label outside the scenario index range")


def signed_power(v, deg: int) -> np.ndarray:
    return np.sign(v) * np.abs(v) ** deg


def generate_features(n: int, cfg: DgpConfig, seed=None) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    return rng.normal(scale=np.sqrt(cfg.M), size=(n, cfg.p))


def conditional_probs(X, cfg: DgpConfig) -> np.ndarray:
    """``softmax(signed_power(B* x + b*, deg))`` row-wise."""
    X = np.asarray(X, dtype=float)
    return softmax(signed_power(X @ cfg.B_star.T + cfg.b_star, cfg.deg))


def sample_labels(probs, seed=None) -> np.ndarray:
    """Independent categorical draws, one per row of ``probs``."""
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    rng = np.random.default_rng(seed)
    u = rng.random(len(probs))
    cdf = np.cumsum(probs, axis=1)
    cdf[:, -1] = 1.0
    return np.argmax(u[:, None] < cdf, axis=1)


def generate_dataset(n: int, cfg: DgpConfig, seed=None) -> Dataset:
    rng = np.random.default_rng(seed)
    X = generate_features(n, cfg, rng)
    probs = conditional_probs(X, cfg)
    labels = sample_labels(probs, rng)
    return Dataset(X, labels, probs, {"deg": cfg.deg})


def save_dataset_csv(ds: Dataset, path) -> None:
    """Header ``x_1..x_p,scenario_index``; scenario indices are written 1-based."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x_{j + 1}" for j in range(ds.X.shape[1])] + ["scenario_index"])
        for x, k in zip(ds.X, ds.labels):
            w.writerow([repr(float(v)) for v in x] + [int(k) + 1])


def load_dataset_csv(path) -> Dataset:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header[-1] != "scenario_index":
        raise ValueError("last CSV column must be scenario_index")
    data = np.array(body, dtype=float).reshape(len(body), len(header))
    return Dataset(data[:, :-1], data[:, -1].astype(np.int64) - 1)
