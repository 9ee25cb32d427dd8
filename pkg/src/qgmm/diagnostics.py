"""Multivariate effective sample size from non-overlapping batch means.

    mESS = m * (det(Lambda) / det(Sigma))^(1/p)

``Lambda`` is the sample covariance of the draws and ``Sigma`` the batch-means
estimate of the asymptotic covariance in the Markov chain CLT. Batches have
size ``floor(sqrt(m))``; leftover rows at the tail are dropped.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import linalg

MIN_DRAWS = 16


class TooFewDraws(ValueError):
    pass


class SingularCovariance(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class MessReport:
    mess: float
    mess_per_iter: float
    mess_per_sec: float | None
    batch_size: int
    p: int


def _as_draws(draws) -> np.ndarray:
    x = np.asarray(draws, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError("draws must be an (m, p) array")
    if x.shape[0] < MIN_DRAWS:
        raise TooFewDraws(f"need at least {MIN_DRAWS} draws, got {x.shape[0]}")
    return x


def batch_means_cov(draws) -> np.ndarray:
    """Batch-means estimate of the asymptotic covariance of the sample mean times m."""
    x = _as_draws(draws)
    m, p = x.shape
    b = math.isqrt(m)
    a = m // b
    bm = x[: a * b].reshape(a, b, p).mean(axis=1)
    dev = bm - bm.mean(axis=0)
    S = (b / (a - 1)) * (dev.T @ dev)
    return 0.5 * (S + S.T)


def _logdet(S: np.ndarray, what: str) -> float:
    L = linalg.try_cholesky(S)
    if L is None or not np.all(np.diagonal(L) > 0):
        raise SingularCovariance(f"{what} is not positive definite")
    return linalg.logdet_from_chol(L)


def mess(draws, sampling_seconds: float | None = None) -> MessReport:
    x = _as_draws(draws)
    m, p = x.shape
    lam = np.cov(x, rowvar=False).reshape(p, p)
    sig = batch_means_cov(x)
    log_ratio = (_logdet(lam, "sample covariance") - _logdet(sig, "batch-means covariance")) / p
    value = m * math.exp(log_ratio)
    if value > 1.5 * m:
        warnings.warn(
            f"mESS {value:.1f} exceeds 1.5x the number of draws ({m}); check for a numerical fault",
            RuntimeWarning,
            stacklevel=2,
        )
    per_sec = value / sampling_seconds if sampling_seconds and sampling_seconds > 0 else None
    return MessReport(value, value / m, per_sec, math.isqrt(m), p)


def _lower_median(values: list[float]) -> float:
    s = sorted(values)
    return s[(len(s) - 1) // 2]


def median_across_runs(reports: list[MessReport]) -> MessReport:
    """Component-wise lower median of the efficiency measures."""
    if not reports:
        raise ValueError("median of an empty list of reports")
    if len(reports) == 1:
        return reports[0]
    per_iter = _lower_median([r.mess_per_iter for r in reports])
    secs = [r.mess_per_sec for r in reports if r.mess_per_sec is not None]
    per_sec = _lower_median(secs) if secs else None
    return MessReport(
        mess=_lower_median([r.mess for r in reports]),
        mess_per_iter=per_iter,
        mess_per_sec=per_sec,
        batch_size=_lower_median([r.batch_size for r in reports]),
        p=reports[0].p,
    )
