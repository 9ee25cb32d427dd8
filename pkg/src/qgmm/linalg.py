"""Small dense linear-algebra helpers built on LAPACK.

The samplers call these routines once or more per MCMC step on k x k
matrices with k in the tens, so the thin ``scipy.linalg.lapack`` bindings
are used directly; the high-level wrappers spend more time validating
their inputs than factorizing them.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import lapack

LOG_2PI = math.log(2.0 * math.pi)


class NotPositiveDefinite(np.linalg.LinAlgError):
    """Raised when a Cholesky factorization fails."""


def cholesky(a: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive-definite matrix."""
    c, info = lapack.dpotrf(a, lower=1, clean=1)
    if info != 0:
        raise NotPositiveDefinite(f"matrix not positive definite (dpotrf info={info})")
    return c


def try_cholesky(a: np.ndarray) -> np.ndarray | None:
    c, info = lapack.dpotrf(a, lower=1, clean=1)
    return c if info == 0 else None


def jittered_cholesky(a: np.ndarray, rel: float = 1e-10, escalations: int = 3) -> np.ndarray:
    """Cholesky factor of ``a``, adding a scaled ridge if the plain factorization fails.

    The ridge starts at ``rel * trace(a) / k`` and grows tenfold at most
    ``escalations`` times before giving up.
    """
    c = try_cholesky(a)
    if c is not None:
        if not math.isfinite(float(c.diagonal().sum())):
            raise NotPositiveDefinite("matrix has non-finite entries")
        return c
    k = a.shape[0]
    lam = rel * float(np.trace(a)) / k
    if not math.isfinite(lam):
        raise NotPositiveDefinite("matrix has non-finite entries")
    if not lam > 0.0:
        raise NotPositiveDefinite("matrix has non-positive trace; no usable jitter scale")
    eye = np.eye(k)
    for _ in range(escalations + 1):
        c = try_cholesky(a + lam * eye)
        if c is not None:
            return c
        lam *= 10.0
    raise NotPositiveDefinite("matrix not positive definite after jitter escalation")


def solve_lower(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve L x = b for lower-triangular L."""
    x, info = lapack.dtrtrs(L, b, lower=1)
    if info != 0:
        raise NotPositiveDefinite(f"singular triangular factor (dtrtrs info={info})")
    return x


def solve_lower_t(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve L^T x = b for lower-triangular L."""
    x, info = lapack.dtrtrs(L, b, lower=1, trans=1)
    if info != 0:
        raise NotPositiveDefinite(f"singular triangular factor (dtrtrs info={info})")
    return x


def cho_solve(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve (L L^T) x = b."""
    return solve_lower_t(L, solve_lower(L, b))


def logdet_from_chol(L: np.ndarray) -> float:
    """log|L L^T|."""
    return 2.0 * float(np.sum(np.log(np.diagonal(L))))


def chol_rank_one_update(L: np.ndarray, v: np.ndarray, beta: float) -> np.ndarray:
    """Return the lower Cholesky factor of ``L L^T + beta * v v^T``.

    Negative ``beta`` performs a downdate; raises :class:`NotPositiveDefinite`
    when the downdated matrix is not positive definite. O(k^2).
    """
    L = np.array(L, dtype=float, copy=True)
    if beta == 0.0:
        return L
    sign = 1.0 if beta > 0.0 else -1.0
    x = math.sqrt(abs(beta)) * np.array(v, dtype=float, copy=True)
    k = L.shape[0]
    for j in range(k):
        ljj = L[j, j]
        r2 = ljj * ljj + sign * x[j] * x[j]
        if not r2 > 0.0:
            raise NotPositiveDefinite("rank-one downdate lost positive definiteness")
        r = math.sqrt(r2)
        c = r / ljj
        s = x[j] / ljj
        L[j, j] = r
        if j + 1 < k:
            col = L[j + 1 :, j]
            col += sign * s * x[j + 1 :]
            col /= c
            x[j + 1 :] *= c
            x[j + 1 :] -= s * col
    return L


def mvn_log_norm_prec(prec_chol: np.ndarray) -> float:
    """Log normalizing constant of a Gaussian whose precision has Cholesky factor R."""
    return -0.5 * prec_chol.shape[0] * LOG_2PI + float(np.log(prec_chol.diagonal()).sum())


def mvn_logpdf_prec(x: np.ndarray, mean: np.ndarray, prec_chol: np.ndarray, log_norm: float | None = None) -> float:
    """Gaussian log-density parameterized by the Cholesky factor R of the precision (P = R R^T)."""
    r = (x - mean) @ prec_chol
    if log_norm is None:
        log_norm = mvn_log_norm_prec(prec_chol)
    return log_norm - 0.5 * float(r @ r)
