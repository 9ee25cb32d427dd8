"""Log quasi-posterior and its frozen-weighting surrogate.

    log pi(theta) = log|W(theta)|/2 - n/2 mbar(theta)' W(theta) mbar(theta) + log p(theta)

with ``W = V^{-1}``. Everything is evaluated through the Cholesky factor
``L`` of ``V``: ``log|W| = -2 sum(log diag L)`` and the quadratic form is
``|L^{-1} mbar|^2``.

The surrogate keeps the weighting matrix of the current state, so it
costs one triangular solve instead of a covariance accumulation plus a
factorization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import linalg
from .momentmodel import MomentModel, SingularWeighting, weighting_cholesky
from .prior import PriorState, log_density


@dataclass(frozen=True, eq=False)
class TargetEval:
    """Log-target at ``theta`` together with the factor of ``V(theta)``.

    ``log_quasi`` is the prior-free part, kept so that a hyperparameter
    update only needs the prior term recomputed. A singular weighting
    matrix is recorded as ``log_target = -inf`` and ``W_chol = None``.
    """

    theta: np.ndarray
    log_target: float
    log_quasi: float
    W_chol: np.ndarray | None
    half_logdet_w: float = 0.0

    @property
    def singular(self) -> bool:
        return self.W_chol is None

    def with_prior(self, prior: PriorState) -> "TargetEval":
        if self.W_chol is None:
            return self
        return TargetEval(
            self.theta,
            self.log_quasi + log_density(prior, self.theta),
            self.log_quasi,
            self.W_chol,
            self.half_logdet_w,
        )


def half_logdet_w(W_chol: np.ndarray) -> float:
    """``log|W| / 2`` for ``W = (L L')^{-1}``."""
    return -float(np.log(W_chol.diagonal()).sum())


def quad_form(model: MomentModel, theta: np.ndarray, W_chol: np.ndarray) -> float:
    """``n/2 mbar(theta)' W mbar(theta)`` via one triangular solve."""
    s = linalg.solve_lower(W_chol, (model.zty - model.ztx @ theta) / model.n)
    return 0.5 * model.n * float(s @ s)


def log_quasi_likelihood(model: MomentModel, theta: np.ndarray, W_chol: np.ndarray) -> float:
    return half_logdet_w(W_chol) - quad_form(model, theta, W_chol)


def log_target(model: MomentModel, prior: PriorState, theta) -> TargetEval:
    theta = np.asarray(theta, dtype=float)
    try:
        L = weighting_cholesky(model, theta)
    except SingularWeighting:
        return TargetEval(theta, -np.inf, -np.inf, None)
    hld = half_logdet_w(L)
    if not math.isfinite(hld):
        return TargetEval(theta, -np.inf, -np.inf, None)
    lq = hld - quad_form(model, theta, L)
    return TargetEval(theta, lq + log_density(prior, theta), lq, L, hld)


def log_surrogate(
    model: MomentModel,
    prior: PriorState,
    theta_new,
    W_chol_current: np.ndarray,
    half_logdet: float | None = None,
) -> float:
    """Log-target at ``theta_new`` with W frozen at the current state's factor.

    ``half_logdet`` may carry the already known ``log|W| / 2`` of that factor.
    """
    theta_new = np.asarray(theta_new, dtype=float)
    if half_logdet is None:
        half_logdet = half_logdet_w(W_chol_current)
    return half_logdet - quad_form(model, theta_new, W_chol_current) + log_density(prior, theta_new)
