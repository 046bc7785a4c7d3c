"""Polynomial-kernel ridge regression of the (possibly noisy) oracle."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

PSD_CHECK_MAX = 3000


def poly_kernel(P, Q, degree: int, offset: float) -> np.ndarray:
    return (offset + np.atleast_2d(P) @ np.atleast_2d(Q).T) ** degree


@dataclass
class KernelModel:
    degree: int
    offset: float
    ridge: float
    support: np.ndarray  # (m, K)
    dual_coef: np.ndarray  # (m, d)
    meta: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return self.support.shape[1]

    @property
    def d(self) -> int:
        return self.dual_coef.shape[1]

    def predict(self, P) -> np.ndarray:
        return poly_kernel(P, self.support, self.degree, self.offset) @ self.dual_coef

    def jacobian(self, P) -> np.ndarray:
        # d/dp (c + q^T p)^s = s (c + q^T p)^(s-1) q
        P = np.atleast_2d(P)
        base = self.offset + P @ self.support.T  # (N, m)
        dk = self.degree * base ** (self.degree - 1)
        return np.einsum("ni,ij,ik->njk", dk, self.dual_coef, self.support)

    def evaluate(self, p):
        p = np.asarray(p, dtype=float)
        return self.predict(p[None])[0], self.jacobian(p[None])[0]


def krr_fit(P, W, degree: int = 3, offset: float = 1.0, ridge: float = 1e-6,
            *, check_psd: bool | None = None) -> KernelModel:
    """Penalized kernel ridge: ``a = (G + m*ridge*I)^{-1} W`` per output column.

    The Gram matrix is checked for PSD-ness (min eigenvalue >= -1e-8) when
    ``m <= 3000`` unless ``check_psd`` says otherwise; the Cholesky
    factorization below fails loudly on larger indefinite systems anyway.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    W = np.asarray(W, dtype=float)
    if W.ndim == 1:
        W = W[:, None]
    m = len(P)
    if m < 2:
        raise ValueError("kernel ridge needs at least two samples")
    if not ridge > 0:
        raise ValueError("ridge weight must be positive")
    if offset < 0:
        raise ValueError("kernel offset must be nonnegative")
    G = poly_kernel(P, P, degree, offset)
    if check_psd is None:
        check_psd = m <= PSD_CHECK_MAX
    if check_psd:
        lam_min = scipy.linalg.eigvalsh(G, subset_by_index=[0, 0])[0]
        if lam_min < -1e-8 * max(1.0, np.abs(G).max()):
            raise ValueError(f"Gram matrix is not PSD (min eigenvalue {lam_min:.3e})")
    A = G + m * ridge * np.eye(m)
    try:
        cho = scipy.linalg.cho_factor(A, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("regularized Gram matrix is singular") from exc
    coef = scipy.linalg.cho_solve(cho, W, check_finite=False)
    return KernelModel(degree, float(offset), float(ridge), P.copy(), coef)


def krr_eval(model: KernelModel, p):
    return model.evaluate(p)
