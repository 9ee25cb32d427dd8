"""Exactly identified linear moment conditions ``E[z_i (y_i - x_i' theta)] = 0``.

Covers plain linear regression (``Z = X``) and exactly identified
instrumental-variables regression. A :class:`MomentModel` caches the
cross-products that do not depend on ``theta`` and evaluates the mean
moment, the moment covariance ``V(theta)`` and its Cholesky factor, from
which the weighting matrix ``W = V^{-1}`` is applied by triangular solves.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import linalg


class SingularWeighting(np.linalg.LinAlgError):
    """V(theta) could not be factorized, even with jitter."""


class RankDeficient(ValueError):
    """Z'X is singular, so the moment equations have no unique root."""


@dataclass(frozen=True, eq=False)
class Dataset:
    y: np.ndarray
    X: np.ndarray
    Z: np.ndarray

    def __post_init__(self):
        y = np.ascontiguousarray(self.y, dtype=float).reshape(-1)
        X = np.ascontiguousarray(self.X, dtype=float)
        Z = np.ascontiguousarray(self.Z, dtype=float)
        if X.ndim != 2 or Z.ndim != 2:
            raise ValueError("X and Z must be 2-d")
        n, k = X.shape
        if Z.shape != (n, k):
            raise ValueError(f"Z has shape {Z.shape}, expected {(n, k)}")
        if y.shape[0] != n:
            raise ValueError(f"y has length {y.shape[0]}, expected {n}")
        if not (n > k >= 1):
            raise ValueError(f"need n > k >= 1, got n={n}, k={k}")
        for name, a in (("y", y), ("X", X), ("Z", Z)):
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} contains non-finite values")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Z", Z)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def k(self) -> int:
        return self.X.shape[1]

    @classmethod
    def build(cls, y, X, Z=None, add_intercept: bool = False) -> "Dataset":
        """Assemble a dataset; ``Z=None`` means plain regression (Z = X)."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        Z = X if Z is None else np.asarray(Z, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None]
        if add_intercept:
            ones = np.ones((X.shape[0], 1))
            X = np.hstack([ones, X])
            Z = np.hstack([ones, Z])
        return cls(y=y, X=X, Z=Z)


@dataclass(frozen=True, eq=False)
class MomentModel:
    """Linear moment model with cached ``theta``-free quantities.

    Attributes
    ----------
    G : (k, k) array, ``Z'X / n``.
    pivot : (k,) array, the root of the sample moments ``(Z'X)^{-1} Z'y``
        (OLS when ``Z = X``, 2SLS for exactly identified IV).
    zty : (k,) array, ``Z'y``.
    fixed_chol : optional Cholesky factor of a frozen ``V``; when set, every
        weighting evaluation returns it regardless of ``theta``.
    """

    data: Dataset
    G: np.ndarray = field(init=False, repr=False)
    pivot: np.ndarray = field(init=False)
    zty: np.ndarray = field(init=False, repr=False)
    ztx: np.ndarray = field(init=False, repr=False)
    n: int = field(init=False)
    k: int = field(init=False)
    fixed_chol: np.ndarray | None = None

    def __post_init__(self):
        d = self.data
        ztx = d.Z.T @ d.X
        zty = d.Z.T @ d.y
        sv = np.linalg.svd(ztx, compute_uv=False)
        if not sv[-1] > np.finfo(float).eps * max(d.n, d.k) * sv[0]:
            raise RankDeficient("Z'X is singular; the model is not identified")
        pivot = np.linalg.solve(ztx, zty)
        object.__setattr__(self, "ztx", ztx)
        object.__setattr__(self, "zty", zty)
        object.__setattr__(self, "G", ztx / d.n)
        object.__setattr__(self, "pivot", pivot)
        object.__setattr__(self, "n", d.n)
        object.__setattr__(self, "k", d.k)

    def with_fixed_weighting(self, theta=None) -> "MomentModel":
        """Copy of the model whose weighting matrix is frozen at ``V(theta)``.

        Defaults to the pivot. Under a frozen weighting matrix and a Gaussian
        prior the quasi-posterior is exactly Gaussian, which makes this mode
        useful for checking samplers against closed forms.
        """
        base = replace(self, fixed_chol=None)
        theta = self.pivot if theta is None else np.asarray(theta, dtype=float)
        return replace(self, fixed_chol=weighting_cholesky(base, theta))


def moment_contribution(model: MomentModel, i: int, theta) -> np.ndarray:
    """``z_i (y_i - x_i' theta)`` for a single observation."""
    n = model.n
    if not 0 <= i < n:
        raise IndexError(f"observation index {i} out of range for n={n}")
    d = model.data
    return d.Z[i] * (d.y[i] - d.X[i] @ np.asarray(theta, dtype=float))


def moment_contributions(model: MomentModel, theta) -> np.ndarray:
    """All per-observation moments as an (n, k) array."""
    d = model.data
    resid = d.y - d.X @ theta
    return d.Z * resid[:, None]


def mean_moment(model: MomentModel, theta) -> np.ndarray:
    """``n^{-1} Z'(y - X theta)``."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (model.k,):
        raise ValueError(f"theta has shape {theta.shape}, expected ({model.k},)")
    return (model.zty - model.ztx @ theta) / model.n


def moment_covariance(model: MomentModel, theta) -> np.ndarray:
    """Sample covariance (divisor n - 1) of the moment contributions at ``theta``."""
    theta = np.asarray(theta, dtype=float)
    d = model.data
    m = d.Z * (d.y - d.X @ theta)[:, None]
    # Centre with the closed-form mean Z'(y - X theta)/n.
    m -= (model.zty - model.ztx @ theta) / model.n
    V = (m.T @ m) / (model.n - 1)
    return 0.5 * (V + V.T)


def weighting_cholesky(model: MomentModel, theta) -> np.ndarray:
    """Lower factor L with ``L L' = V(theta)``; W is applied by solves against it."""
    if model.fixed_chol is not None:
        return model.fixed_chol
    try:
        return linalg.jittered_cholesky(moment_covariance(model, theta))
    except linalg.NotPositiveDefinite as exc:
        raise SingularWeighting(str(exc)) from exc


def proposal_precision(model: MomentModel, W_chol: np.ndarray) -> np.ndarray:
    """``n G' W G`` computed as ``n (L^{-1} G)' (L^{-1} G)``."""
    try:
        B = linalg.solve_lower(W_chol, model.G)
    except linalg.NotPositiveDefinite as exc:
        raise SingularWeighting(str(exc)) from exc
    U = model.n * (B.T @ B)
    return 0.5 * (U + U.T)
