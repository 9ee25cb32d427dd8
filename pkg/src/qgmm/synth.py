"""Heteroskedastic linear-regression benchmark data.

Each dataset has ``x_i = (1, xt_i)`` with ``xt_i ~ N(0, S)``, where ``S`` is
an inverse-Wishart draw ``IW(I_{k-1}, k + 1)`` rescaled to unit diagonal.
The outcome is ``y_i ~ N(theta' x_i, sigma_i^2)`` with
``theta = (1, 1, 1, 0, ..., 0)`` and
``sigma_i^2 = (1 + x_{i,2}^2 + x_{i,3}^2) / 3``, where ``x_{i,2}`` and ``x_{i,3}``
are the first two non-constant covariates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .momentmodel import Dataset


@dataclass(frozen=True)
class SynthConfig:
    n: int = 100
    k: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.k < 3:
            raise ValueError(f"k must be at least 3, got {self.k}")
        if self.n <= self.k:
            raise ValueError(f"n must exceed k, got n={self.n}, k={self.k}")


def data_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & (2**64 - 1), 0])


def sample_wishart_factor(dim: int, dof: float, rng: np.random.Generator) -> np.ndarray:
    """Bartlett factor A (lower triangular) with ``A A' ~ Wishart(I, dof)``."""
    A = np.zeros((dim, dim))
    # chi^2 with dof - i degrees of freedom on the diagonal (i = 0-based row).
    A[np.diag_indices(dim)] = np.sqrt(rng.chisquare(dof - np.arange(dim)))
    rows, cols = np.tril_indices(dim, -1)
    A[rows, cols] = rng.standard_normal(rows.size)
    return A


def sample_inverse_wishart(dim: int, dof: float, rng: np.random.Generator) -> np.ndarray:
    """Draw from ``IW(I_dim, dof)``.

    If ``A A' ~ W(I, dof)`` then ``(A A')^{-1} = A^{-T} A^{-1}``; ``A^{-1}`` comes
    from a triangular solve against the identity.
    """
    if not dof > dim - 1:
        raise ValueError(f"inverse Wishart needs dof > dim - 1, got dof={dof}, dim={dim}")
    A = sample_wishart_factor(dim, dof, rng)
    Ainv = linalg.solve_lower(A, np.eye(dim))
    S = Ainv.T @ Ainv
    return 0.5 * (S + S.T)


def to_correlation(S) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    d = np.diagonal(S)
    if np.any(d <= 0):
        raise ValueError("covariance matrix has a non-positive diagonal entry")
    s = 1.0 / np.sqrt(d)
    C = S * s[:, None] * s[None, :]
    return 0.5 * (C + C.T)


def error_variance(X: np.ndarray) -> np.ndarray:
    """``(1 + x_{i,2}^2 + x_{i,3}^2) / 3`` with column 0 the intercept."""
    return (1.0 + X[:, 1] ** 2 + X[:, 2] ** 2) / 3.0


def true_coefficients(k: int) -> np.ndarray:
    theta = np.zeros(k)
    theta[:3] = 1.0
    return theta


def generate(config: SynthConfig, return_cov: bool = False):
    """Simulate one dataset; returns ``(dataset, true_theta)`` (plus ``S`` if asked)."""
    rng = data_rng(config.seed)
    n, k = config.n, config.k
    S = to_correlation(sample_inverse_wishart(k - 1, k + 1, rng))
    C = linalg.cholesky(S)
    xt = rng.standard_normal((n, k - 1)) @ C.T
    X = np.hstack([np.ones((n, 1)), xt])
    theta = true_coefficients(k)
    y = X @ theta + np.sqrt(error_variance(X)) * rng.standard_normal(n)
    data = Dataset(y=y, X=X, Z=X)
    if return_cov:
        return data, theta, S
    return data, theta
