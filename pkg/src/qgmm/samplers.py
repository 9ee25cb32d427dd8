"""MCMC samplers for the linear-moment quasi-posterior.

Four transition kernels share one driver (:func:`run_chain`):

``ram``
    Adaptive random-walk Metropolis with Vihola's robust adaptation of the
    proposal's Cholesky factor toward a target acceptance rate.
``da``
    Two-stage delayed acceptance with the same adaptive random walk. Stage 1
    screens proposals with the surrogate that keeps the current state's
    weighting matrix; only survivors pay for a new factorization.
``mda-exact``
    Delayed acceptance whose stage-1 proposal is the Gaussian conditional
    posterior implied by the frozen weighting matrix and the prior,
    ``N((U + Q)^{-1} U pivot, (U + Q)^{-1})`` with ``U = n G' W G``.
``mda-approx``
    As above but without the prior, ``N(pivot, U^{-1})``.

Stage-1 probabilities are always evaluated with the weighting matrix of the
state the move starts from, for both the surrogate and the proposal
density. Stage 2 evaluates the true reverse proposal density and the
reverse stage-1 probability under ``W(theta')`` and applies the usual
delayed-acceptance correction, so every kernel leaves the quasi-posterior
invariant.
"""

from __future__ import annotations

import enum
import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import linalg
from .kernel import TargetEval, half_logdet_w, log_surrogate, log_target, quad_form
from .momentmodel import MomentModel, SingularWeighting, proposal_precision
from .prior import PriorFamily, PriorSpec, PriorState, gibbs_update, initial_state, log_density, precision_diagonal

logger = logging.getLogger(__name__)

# When set, the DA stage-1 ratio is recomputed with the log|W| prefactor
# dropped and the two versions are compared.
CHECK_PREFACTOR_CANCELLATION = False


class Algorithm(str, enum.Enum):
    RAM = "ram"
    DA = "da"
    MDA_EXACT = "mda-exact"
    MDA_APPROX = "mda-approx"


class ProposalSingular(np.linalg.LinAlgError):
    """The proposal precision could not be factorized."""


class SamplerFailure(RuntimeError):
    """Almost every step hit a singular branch; the run is not usable."""


@dataclass(frozen=True)
class SamplerConfig:
    algorithm: Algorithm = Algorithm.MDA_APPROX
    total_draws: int = 200_000
    retained_draws: int = 100_000
    seed: int = 0
    alpha_star: float = 0.234
    gamma: float = 2.0 / 3.0
    initial_scale: float = 0.1
    # "stage1": adapt on the stage-1 acceptance probability; "final": on the
    # overall accept indicator. Only used by the DA baseline.
    da_adapt_on: str = "stage1"

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        if self.total_draws < 1 or self.retained_draws < 1:
            raise ValueError("total_draws and retained_draws must be positive")
        if self.retained_draws > self.total_draws:
            raise ValueError("retained_draws cannot exceed total_draws")
        if not 0.0 < self.alpha_star < 1.0:
            raise ValueError("alpha_star must lie in (0, 1)")
        if not 0.5 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (1/2, 1]")
        if self.da_adapt_on not in ("stage1", "final"):
            raise ValueError("da_adapt_on must be 'stage1' or 'final'")


@dataclass(frozen=True, eq=False)
class ChainState:
    """Current draw with its cached target evaluation.

    The modified DA kernels also cache the stage-1 proposal built from the
    current weighting factor (and its log-density at ``theta``); it is
    dropped whenever something it depends on changes.
    """

    theta: np.ndarray
    prior: PriorState
    target: TargetEval
    proposal: "_CachedProposal | None" = None


@dataclass(frozen=True, eq=False)
class AdaptState:
    S: np.ndarray
    t: int = 0
    alpha_star: float = 0.234
    gamma: float = 2.0 / 3.0


@dataclass(frozen=True)
class StepReport:
    stage1_accepted: bool
    stage2_accepted: bool
    log_alpha1: float
    log_alpha2: float | None = None
    singular: bool = False
    proposal: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def accepted(self) -> bool:
        return self.stage2_accepted


@dataclass(eq=False)
class RunResult:
    algorithm: Algorithm
    prior: PriorSpec
    config: SamplerConfig
    n: int
    k: int
    draws: np.ndarray
    tau_draws: np.ndarray
    accept_stage1: float
    accept_stage2: float
    sampling_seconds: float
    singular_steps: int = 0
    final_state: ChainState | None = field(default=None, repr=False)


def initial_chain_state(model: MomentModel, prior: PriorState, theta=None) -> ChainState:
    theta = np.array(model.pivot if theta is None else theta, dtype=float)
    return ChainState(theta, prior, log_target(model, prior, theta))


def initial_adapt_state(k: int, config: SamplerConfig) -> AdaptState:
    return AdaptState(config.initial_scale * np.eye(k), 0, config.alpha_star, config.gamma)


def adapt_scale(adapt: AdaptState, u: np.ndarray, alpha: float) -> AdaptState:
    """Robust adaptive Metropolis update of the proposal factor.

    ``S S' <- S (I + eta_t (alpha - alpha*) u u' / |u|^2) S'`` with
    ``eta_t = min(1, k t^{-gamma})``, carried out as a rank-one Cholesky
    update of ``S``.
    """
    t = adapt.t + 1
    k = u.shape[0]
    eta = min(1.0, k * t ** (-adapt.gamma))
    coef = eta * (alpha - adapt.alpha_star)
    unorm2 = float(u @ u)
    if coef == 0.0 or unorm2 == 0.0:
        return replace(adapt, t=t)
    v = (adapt.S @ u) / math.sqrt(unorm2)
    S = linalg.chol_rank_one_update(adapt.S, v, coef)
    return replace(adapt, S=S, t=t)


def _log_uniform(rng: np.random.Generator) -> float:
    u = rng.random()
    return math.log(u) if u > 0.0 else -math.inf


def _moved(state: ChainState, ev: TargetEval) -> ChainState:
    return ChainState(ev.theta, state.prior, ev)


def ram_step(state: ChainState, adapt: AdaptState, model: MomentModel, rng: np.random.Generator):
    theta = state.theta
    u = rng.standard_normal(theta.shape[0])
    proposal = theta + adapt.S @ u
    ev = log_target(model, state.prior, proposal)
    log_a = min(0.0, ev.log_target - state.target.log_target) if not ev.singular else -math.inf
    accepted = _log_uniform(rng) < log_a
    adapt = adapt_scale(adapt, u, math.exp(log_a))
    report = StepReport(accepted, accepted, log_a, None, ev.singular, proposal)
    return (_moved(state, ev) if accepted else state), adapt, report


def da_conventional_step(
    state: ChainState,
    adapt: AdaptState,
    model: MomentModel,
    rng: np.random.Generator,
    adapt_on: str = "stage1",
):
    theta, prior, cur = state.theta, state.prior, state.target
    u = rng.standard_normal(theta.shape[0])
    proposal = theta + adapt.S @ u

    # Stage 1: the surrogate anchored at the current state equals the cached
    # log-target there, so the ratio is surrogate(theta') - log pi(theta).
    log_a1 = min(0.0, log_surrogate(model, prior, proposal, cur.W_chol, cur.half_logdet_w) - cur.log_target)
    if CHECK_PREFACTOR_CANCELLATION:
        _check_prefactor(model, prior, proposal, theta, cur.W_chol, log_a1)

    log_a2 = None
    singular = False
    passed = _log_uniform(rng) < log_a1
    accepted = False
    ev = None
    if passed:
        ev = log_target(model, prior, proposal)
        if ev.singular:
            singular = True
            log_a2 = -math.inf
        else:
            log_a1_rev = min(
                0.0, log_surrogate(model, prior, theta, ev.W_chol, ev.half_logdet_w) - ev.log_target
            )
            log_a2 = min(0.0, (ev.log_target - cur.log_target) + (log_a1_rev - log_a1))
            accepted = _log_uniform(rng) < log_a2

    alpha = math.exp(log_a1) if adapt_on == "stage1" else float(accepted)
    adapt = adapt_scale(adapt, u, alpha)
    report = StepReport(passed, accepted, log_a1, log_a2, singular, proposal)
    return (_moved(state, ev) if accepted else state), adapt, report


def _check_prefactor(model, prior, proposal, theta, W_chol, log_a1):
    ratio = (quad_form(model, theta, W_chol) - quad_form(model, proposal, W_chol)) + (
        log_density(prior, proposal) - log_density(prior, theta)
    )
    with_prefactor = (half_logdet_w(W_chol) - quad_form(model, proposal, W_chol) + log_density(prior, proposal)) - (
        half_logdet_w(W_chol) - quad_form(model, theta, W_chol) + log_density(prior, theta)
    )
    assert abs(ratio - with_prefactor) <= 1e-9 * max(1.0, abs(ratio)), (ratio, with_prefactor)
    assert abs(min(0.0, ratio) - log_a1) <= 1e-8 * max(1.0, abs(ratio)), (ratio, log_a1)


@dataclass(frozen=True, eq=False)
class GaussianProposal:
    """``N(mean, P^{-1})`` with ``P = R R'``."""

    mean: np.ndarray
    prec_chol: np.ndarray
    log_norm: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "log_norm", linalg.mvn_log_norm_prec(self.prec_chol))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal(self.mean.shape[0])
        return self.mean + linalg.solve_lower_t(self.prec_chol, z)

    def logpdf(self, x: np.ndarray) -> float:
        return linalg.mvn_logpdf_prec(x, self.mean, self.prec_chol, self.log_norm)

    @property
    def cov(self) -> np.ndarray:
        Rinv = linalg.solve_lower(self.prec_chol, np.eye(self.mean.shape[0]))
        return Rinv.T @ Rinv


@dataclass(frozen=True, eq=False)
class _CachedProposal:
    q: GaussianProposal
    exact: bool
    logq_theta: float


def conditional_proposal(model: MomentModel, W_chol: np.ndarray, prior: PriorState | None) -> GaussianProposal:
    """Gaussian proposal implied by a frozen weighting matrix.

    With ``prior`` given (Exact): ``N((U + Q)^{-1} U pivot, (U + Q)^{-1})``.
    With ``prior=None`` (Approx): ``N(pivot, U^{-1})``.
    """
    U = proposal_precision(model, W_chol)
    if prior is None:
        P = U
    else:
        P = U.copy()
        P.flat[:: model.k + 1] += precision_diagonal(prior, model.k)
    R = linalg.try_cholesky(P)
    if R is None:
        raise ProposalSingular("proposal precision not positive definite")
    mean = model.pivot if prior is None else linalg.cho_solve(R, U @ model.pivot)
    return GaussianProposal(np.asarray(mean, dtype=float), R)


def _mda_step(state: ChainState, model: MomentModel, rng: np.random.Generator, exact: bool):
    theta, prior, cur = state.theta, state.prior, state.target
    qprior = prior if exact else None
    cached = state.proposal
    if cached is None or cached.exact is not exact:
        try:
            fwd = conditional_proposal(model, cur.W_chol, qprior)
        except (ProposalSingular, SingularWeighting):
            return state, StepReport(False, False, -math.inf, None, True)
        cached = _CachedProposal(fwd, exact, fwd.logpdf(theta))
        state = ChainState(theta, prior, cur, cached)
    fwd = cached.q
    proposal = fwd.sample(rng)

    # Stage 1 under W(theta): q(theta) pi*(theta') / (q(theta') pi*(theta)),
    # where pi*(theta) is the cached target. The proposal does not depend
    # on the point it is drawn from, only on the frozen factor.
    log_q_prop = fwd.logpdf(proposal)
    sur_prop = log_surrogate(model, prior, proposal, cur.W_chol, cur.half_logdet_w)
    log_a1 = min(0.0, (cached.logq_theta + sur_prop) - (log_q_prop + cur.log_target))
    if not _log_uniform(rng) < log_a1:
        return state, StepReport(False, False, log_a1, None, False, proposal)

    ev = log_target(model, prior, proposal)
    if ev.singular:
        return state, StepReport(True, False, log_a1, -math.inf, True, proposal)
    try:
        rev = conditional_proposal(model, ev.W_chol, qprior)
    except (ProposalSingular, SingularWeighting):
        return state, StepReport(True, False, log_a1, -math.inf, True, proposal)

    # Reverse move theta' -> theta: true proposal density under W(theta'),
    # and the stage-1 probability it would have had with W(theta') frozen.
    rev_at_prop = rev.logpdf(proposal)
    rev_at_cur = rev.logpdf(theta)
    sur_back = log_surrogate(model, prior, theta, ev.W_chol, ev.half_logdet_w)
    log_a1_rev = min(0.0, (rev_at_prop + sur_back) - (rev_at_cur + ev.log_target))
    log_a2 = min(
        0.0,
        (ev.log_target - cur.log_target) + (rev_at_cur - log_q_prop) + (log_a1_rev - log_a1),
    )
    accepted = _log_uniform(rng) < log_a2
    report = StepReport(True, accepted, log_a1, log_a2, False, proposal)
    if accepted:
        return ChainState(proposal, prior, ev, _CachedProposal(rev, exact, rev_at_prop)), report
    return state, report


def mda_exact_step(state: ChainState, model: MomentModel, rng: np.random.Generator):
    return _mda_step(state, model, rng, exact=True)


def mda_approx_step(state: ChainState, model: MomentModel, rng: np.random.Generator):
    return _mda_step(state, model, rng, exact=False)


def hyper_step(state: ChainState, rng: np.random.Generator) -> ChainState:
    """Gibbs update of the prior hyperparameters, then refresh of the cached target."""
    if state.prior.spec.family is PriorFamily.NORMAL:
        return state
    prior = gibbs_update(state.prior, state.theta, rng)
    # The Approx proposal ignores the prior, so its cache survives.
    cached = state.proposal if state.proposal is not None and not state.proposal.exact else None
    return ChainState(state.theta, prior, state.target.with_prior(prior), cached)


def sampler_rng(seed: int) -> np.random.Generator:
    """Generator for the sampling loop; distinct from the data-generation stream of the same seed."""
    return np.random.default_rng([int(seed) & (2**64 - 1), 1])


def run_chain(
    model: MomentModel,
    prior_spec: PriorSpec,
    config: SamplerConfig,
    rng: np.random.Generator | None = None,
    trace=None,
) -> RunResult:
    """Run one chain from the pivot and keep the last ``retained_draws`` draws.

    Each sweep is one ``theta`` move followed, for the inverse-gamma
    families, by a Gibbs draw of the hyperparameters. ``trace``, if given,
    is called with every :class:`StepReport`. Only the sampling loop is
    timed.
    """
    if rng is None:
        rng = sampler_rng(config.seed)
    k = model.k
    prior = initial_state(prior_spec, k)
    state = initial_chain_state(model, prior)
    if state.target.singular:
        raise SamplerFailure("weighting matrix is singular at the starting point")
    adapt = initial_adapt_state(k, config)
    algo = config.algorithm
    hyper = prior_spec.family is not PriorFamily.NORMAL

    total, keep = config.total_draws, config.retained_draws
    first_kept = total - keep
    draws = np.empty((keep, k))
    tau_draws = np.empty((keep, prior.tau.size))
    n_stage1 = n_stage2 = n_singular = 0

    start = time.perf_counter()
    for it in range(total):
        if algo is Algorithm.RAM:
            state, adapt, rep = ram_step(state, adapt, model, rng)
        elif algo is Algorithm.DA:
            state, adapt, rep = da_conventional_step(state, adapt, model, rng, config.da_adapt_on)
        elif algo is Algorithm.MDA_EXACT:
            state, rep = _mda_step(state, model, rng, True)
        else:
            state, rep = _mda_step(state, model, rng, False)
        if hyper:
            state = hyper_step(state, rng)
        n_stage1 += rep.stage1_accepted
        n_stage2 += rep.stage2_accepted
        n_singular += rep.singular
        if trace is not None:
            trace(rep)
        if it >= first_kept:
            draws[it - first_kept] = state.theta
            tau_draws[it - first_kept] = state.prior.tau
        if (it + 1) % 10_000 == 0 and n_singular > 0.999 * (it + 1):
            raise SamplerFailure(f"{n_singular} of {it + 1} steps hit singular branches")
    elapsed = time.perf_counter() - start

    if total >= 1000 and n_singular > 0.999 * total:
        raise SamplerFailure(f"{n_singular} of {total} steps hit singular branches")
    logger.debug(
        "%s: stage1 %.3f, accept %.3f, %.2fs", algo.value, n_stage1 / total, n_stage2 / total, elapsed
    )
    return RunResult(
        algorithm=algo,
        prior=prior_spec,
        config=config,
        n=model.n,
        k=k,
        draws=draws,
        tau_draws=tau_draws,
        accept_stage1=n_stage1 / total,
        accept_stage2=n_stage2 / total,
        sampling_seconds=elapsed,
        singular_steps=n_singular,
        final_state=state,
    )
