"""Gaussian coefficient priors with optional inverse-gamma variance hyperparameters.

Three families are supported:

``normal``
    theta ~ N(0, I).
``nig-homo``
    theta | tau ~ N(0, tau I), tau ~ IG(nu1, nu2).
``nig-hetero``
    theta_j | tau_j ~ N(0, tau_j), tau_j ~ IG(nu1, nu2) independently.

Inverse-gamma distributions use the shape-rate convention, density
proportional to ``x^{-a-1} exp(-b / x)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class PriorFamily(str, enum.Enum):
    NORMAL = "normal"
    NIG_HOMO = "nig-homo"
    NIG_HETERO = "nig-hetero"


@dataclass(frozen=True)
class PriorSpec:
    family: PriorFamily = PriorFamily.NORMAL
    nu1: float = 2.0
    nu2: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "family", PriorFamily(self.family))
        if not (self.nu1 > 0 and self.nu2 > 0):
            raise ValueError(f"nu1 and nu2 must be positive, got {self.nu1}, {self.nu2}")

    def tau_length(self, k: int) -> int:
        return {PriorFamily.NORMAL: 0, PriorFamily.NIG_HOMO: 1, PriorFamily.NIG_HETERO: k}[self.family]


@dataclass(frozen=True, eq=False)
class PriorState:
    spec: PriorSpec
    tau: np.ndarray

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=float).reshape(-1)
        if self.spec.family is PriorFamily.NORMAL and tau.size:
            raise ValueError("the normal prior has no hyperparameters")
        if self.spec.family is PriorFamily.NIG_HOMO and tau.size != 1:
            raise ValueError(f"nig-homo needs exactly one tau, got {tau.size}")
        if not np.all(tau > 0):
            raise ValueError("tau entries must be strictly positive")
        object.__setattr__(self, "tau", tau)


def initial_state(spec: PriorSpec, k: int) -> PriorState:
    """Hyperparameters at the inverse-gamma prior mean (1.0 when the mean is undefined)."""
    size = spec.tau_length(k)
    tau0 = spec.nu2 / (spec.nu1 - 1.0) if spec.nu1 > 1.0 else 1.0
    return PriorState(spec, np.full(size, tau0))


def _inv_variances(state: PriorState, k: int) -> np.ndarray:
    fam = state.spec.family
    if fam is PriorFamily.NORMAL:
        return np.ones(k)
    if fam is PriorFamily.NIG_HOMO:
        return np.full(k, 1.0 / state.tau[0])
    if state.tau.size != k:
        raise ValueError(f"nig-hetero state has {state.tau.size} taus for k={k}")
    return 1.0 / state.tau


def precision_diagonal(state: PriorState, k: int) -> np.ndarray:
    return _inv_variances(state, k)


def precision(state: PriorState, k: int) -> np.ndarray:
    """Diagonal prior precision Q(tau) as a dense (k, k) matrix."""
    return np.diag(_inv_variances(state, k))


def log_density(state: PriorState, theta) -> float:
    """``-theta' Q theta / 2 + log|Q| / 2``, dropping constants free of theta and tau."""
    theta = np.asarray(theta, dtype=float)
    fam = state.spec.family
    if fam is PriorFamily.NORMAL:
        return -0.5 * float(theta @ theta)
    if fam is PriorFamily.NIG_HOMO:
        tau = float(state.tau[0])
        return -0.5 * float(theta @ theta) / tau - 0.5 * theta.shape[0] * math.log(tau)
    if state.tau.size != theta.shape[0]:
        raise ValueError(f"nig-hetero state has {state.tau.size} taus for k={theta.shape[0]}")
    return -0.5 * float((theta * theta) @ (1.0 / state.tau)) - 0.5 * float(np.log(state.tau).sum())


def sample_inv_gamma(shape, rate, rng: np.random.Generator, size=None):
    """Draw from IG(shape, rate) as ``rate / Gamma(shape, 1)``."""
    return np.asarray(rate) / rng.gamma(shape, 1.0, size=size)


def gibbs_update(state: PriorState, theta, rng: np.random.Generator) -> PriorState:
    """Draw tau from its full conditional given theta."""
    spec = state.spec
    theta = np.asarray(theta, dtype=float)
    if spec.family is PriorFamily.NORMAL:
        return state
    if spec.family is PriorFamily.NIG_HOMO:
        k = theta.shape[0]
        tau = sample_inv_gamma(spec.nu1 + 0.5 * k, spec.nu2 + 0.5 * float(theta @ theta), rng, size=1)
        return PriorState(spec, tau)
    tau = sample_inv_gamma(spec.nu1 + 0.5, spec.nu2 + 0.5 * theta * theta, rng, size=theta.shape[0])
    return PriorState(spec, tau)


def inv_gamma_logpdf(x, shape: float, rate: float):
    """Normalized IG(shape, rate) log-density."""
    x = np.asarray(x, dtype=float)
    return shape * math.log(rate) - math.lgamma(shape) - (shape + 1.0) * np.log(x) - rate / x
