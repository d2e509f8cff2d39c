"""
Closed-form error and iteration bounds, and their empirical verification.

The formulas cover the log-barrier results, the alpha-optimal default
results (tight error bound, kappa corollary, smoothness, iteration counts
with random and default initialization), the multitask iteration thresholds
and the state-dependent lambda/eps_opt construction. verify_error_bound
drives a regularized objective to an approximate stationary point and
compares the true value gap against the bounds.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Dict, List, NamedTuple, Optional, Tuple

import numpy as np
from scipy.optimize import minimize

from .errors import BoundInputError, ValidationError
from .mdp_core import (AlphaProfile, DeterministicPolicy, Mdp, SoftmaxParams, alpha_profile,
                       corrupt_deterministic, evaluate, mismatch_coefficient, random_mdp,
                       solve_optimal, visitation)
from .optimizer import Mode, OptimConfig, exact_gradient, objective, run_exact
from .regularizers import DefaultPolicy, RegularizerKind, RegularizerSpec
from .rng import Purpose, stream

logger = logging.getLogger('mtrpo.bounds')

KAPPA_DECIMALS = 12
HOLD_TOL = 1e-10


@dataclass(frozen=True)
class BoundInputs:
    """
    Everything a bound formula may need.

    Attributes:
        n_states: |S|
        n_actions: |A|
        gamma: Discount in [0, 1)
        lam: Regularization weight
        eps_opt: Gradient tolerance reached by the optimizer
        eps: Target value error (iteration bounds)
        alpha: Per-state TV radius of the default policy
        mismatch: ||d_rho^{pi*} / mu||_inf
        mismatch_theta: ||d_rho^{pi_theta} / mu||_inf
        inv_mu_inf: ||1 / mu||_inf
        mu: Restart distribution for E_mu expectations (uniform if omitted)
        task_alphas: (K, |S|) alpha profiles for the multitask thresholds
        task_mismatch: (K,) per-task mismatch coefficients
    """

    n_states: int
    n_actions: int
    gamma: float
    lam: float = 0.0
    eps_opt: float = 0.0
    eps: Optional[float] = None
    alpha: Optional[AlphaProfile] = None
    mismatch: float = 1.0
    mismatch_theta: Optional[float] = None
    inv_mu_inf: Optional[float] = None
    mu: Optional[np.ndarray] = None
    task_alphas: Optional[np.ndarray] = None
    task_mismatch: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.n_states < 1 or self.n_actions < 1:
            raise ValidationError("n_states and n_actions must be positive", operation='BoundInputs')
        if not 0.0 <= self.gamma < 1.0:
            raise ValidationError(f"gamma must lie in [0, 1), got {self.gamma}", operation='BoundInputs')
        if self.lam < 0 or self.eps_opt < 0:
            raise ValidationError("lambda and eps_opt must be non-negative", operation='BoundInputs')
        if self.eps is not None and self.eps <= 0:
            raise ValidationError("eps must be positive", operation='BoundInputs')
        if self.mismatch <= 0 or (self.mismatch_theta is not None and self.mismatch_theta <= 0):
            raise ValidationError("mismatch coefficients must be positive", operation='BoundInputs')
        if self.alpha is not None and self.alpha.alpha.shape != (self.n_states,):
            raise ValidationError("alpha profile has the wrong length", operation='BoundInputs')
        if self.mu is not None:
            mu = np.asarray(self.mu, dtype=float)
            if mu.shape != (self.n_states,) or np.any(mu <= 0):
                raise ValidationError("mu must be strictly positive with one entry per state",
                                      operation='BoundInputs')
            object.__setattr__(self, 'mu', mu)

    def restart(self) -> np.ndarray:
        if self.mu is None:
            return np.full(self.n_states, 1.0 / self.n_states)
        return self.mu

    def require(self, operation: str, *names: str):
        missing = [name for name in names if getattr(self, name) is None]
        if missing:
            raise BoundInputError(f"{operation} needs {', '.join(missing)}", operation=operation,
                                  details={'missing': missing})


@dataclass(frozen=True)
class BoundReport:
    bound_value: float
    branch: str
    vacuous: bool
    flags: Tuple[str, ...] = ()
    branches: Dict[str, float] = field(default_factory=dict)
    inputs: Optional[BoundInputs] = None


class LambdaSetting(NamedTuple):
    value: float
    precondition_met: bool


class StateLambda(NamedTuple):
    """Per-state lambda(s) and the matching eps_opt(s, a) threshold (constant in a)."""

    lam: np.ndarray
    eps_opt: np.ndarray


def _report(branches: Dict[str, float], gamma: float, flags: List[str], inputs: BoundInputs) -> BoundReport:
    branch = min(branches, key=lambda name: branches[name])
    value = branches[branch]
    return BoundReport(bound_value=value, branch=branch, vacuous=value > 1.0 / (1.0 - gamma),
                       flags=tuple(flags), branches=dict(branches), inputs=inputs)


def kappa(alpha_s: float, n_actions: int) -> float:
    """
    2|A|(1 - alpha) / (2|A|(1 - alpha) - 1), or +inf when the denominator is not positive.

    The product 2|A|(1 - alpha) is rounded to 12 decimals first so that
    alpha = 1 - 1/|A| gives exactly 2.
    """
    if not 0.0 <= alpha_s <= 1.0:
        raise ValidationError(f"alpha must lie in [0, 1], got {alpha_s}", operation='kappa')
    scaled = round(2.0 * n_actions * (1.0 - alpha_s), KAPPA_DECIMALS)
    if scaled <= 1.0:
        return math.inf
    return scaled / (scaled - 1.0)


def mean_kappa(alpha: AlphaProfile, n_actions: int) -> float:
    """E_{s ~ U_S}[kappa(alpha(s))]."""
    return float(np.mean([kappa(float(a), n_actions) for a in alpha.alpha]))


def smoothness_beta(lam: float, n_states: int, gamma: float) -> float:
    """beta_lambda = 8 / (1 - gamma)^3 + 2 lambda / |S|."""
    if not gamma < 1.0:
        raise ValidationError("gamma must be below 1", operation='smoothness_beta')
    return 8.0 / (1.0 - gamma) ** 3 + 2.0 * lam / n_states


def lambda_for_eps(eps: float, gamma: float, mean_kappa_value: float, mismatch: float) -> LambdaSetting:
    """lambda = eps (1 - gamma) / (E[kappa] mismatch); flagged when it is not below 1."""
    value = eps * (1.0 - gamma) / (mean_kappa_value * mismatch)
    if value >= 1.0:
        logger.warning(f"lambda={value:.4g} is not below 1; the iteration bound does not apply")
    return LambdaSetting(value=value, precondition_met=value < 1.0)


def lambda_for_eps_log_barrier(eps: float, gamma: float, mismatch: float) -> LambdaSetting:
    return lambda_for_eps(eps, gamma, 2.0, mismatch)


def error_bound_log_barrier(lam: float, gamma: float, mismatch: float) -> float:
    return 2 * lam / (1 - gamma) * mismatch


def error_bound_tight(inputs: BoundInputs) -> BoundReport:
    """
    Minimum of the reward-dominant and KL-dominant error bounds.

    reward: 1/(1-gamma) E_U[eps_opt |S| / max{1 - alpha - eps_opt |S| / lambda, 0} + lambda alpha] m
    kl:     (|A| - 1)/(1-gamma)^2 (E_mu[alpha] m_theta + eps_opt |S| / lambda)

    Raises:
        BoundInputError: Without alpha or mismatch_theta, or with lambda = 0
    """
    inputs.require('error_bound_tight', 'alpha', 'mismatch_theta')
    if inputs.lam <= 0:
        raise BoundInputError("error_bound_tight needs lambda > 0", operation='error_bound_tight')
    n_states, gamma, lam, eps_opt = inputs.n_states, inputs.gamma, inputs.lam, inputs.eps_opt
    alpha = inputs.alpha.alpha
    slack = np.maximum(1.0 - alpha - eps_opt * n_states / lam, 0.0)
    with np.errstate(divide='ignore', invalid='ignore'):
        ratio = np.where(slack > 0, eps_opt * n_states / np.where(slack > 0, slack, 1.0), math.inf)
    reward_branch = float(np.mean(ratio + lam * alpha)) / (1.0 - gamma) * inputs.mismatch
    kl_branch = (inputs.n_actions - 1) / (1.0 - gamma) ** 2 * (
        float(inputs.restart() @ alpha) * inputs.mismatch_theta + eps_opt * n_states / lam)
    return _report({'reward': reward_branch, 'kl': kl_branch}, gamma, [], inputs)


def error_bound_kappa(inputs: BoundInputs) -> BoundReport:
    """
    E_U[kappa(alpha)] lambda / (1 - gamma) mismatch.

    Flags 'eps_opt_precondition' when eps_opt > lambda / (2|S||A|),
    'lambda_precondition' when lambda >= 1 and 'degenerate_lambda' at 0.
    """
    inputs.require('error_bound_kappa', 'alpha')
    flags = []
    if inputs.eps_opt > inputs.lam / (2 * inputs.n_states * inputs.n_actions):
        flags.append('eps_opt_precondition')
    if inputs.lam >= 1.0:
        flags.append('lambda_precondition')
    if inputs.lam == 0.0:
        flags.append('degenerate_lambda')
    k = mean_kappa(inputs.alpha, inputs.n_actions)
    value = math.inf if math.isinf(k) else k * inputs.lam / (1 - inputs.gamma) * inputs.mismatch
    return _report({'kappa': value}, inputs.gamma, flags, inputs)


def error_bound_state_dependent(inputs: BoundInputs, eps_opt_table: np.ndarray, lam_vector: np.ndarray,
                                a_star: DeterministicPolicy, simplified: bool = False) -> BoundReport:
    """
    Error bound with per-state lambda(s) and per-pair eps_opt(s, a).

    With simplified=True the reward branch uses 2 eps_opt |S| / (1 - alpha)
    in place of the max{.} denominator, which is valid when
    eps_opt(s, a) <= (1 - alpha(s)) lambda(s) / |S|; a violated condition is
    flagged rather than raised.
    """
    inputs.require('error_bound_state_dependent', 'alpha', 'mismatch_theta')
    n_states = inputs.n_states
    alpha = inputs.alpha.alpha
    lam = np.asarray(lam_vector, dtype=float)
    eps_table = np.asarray(eps_opt_table, dtype=float)
    if lam.shape != (n_states,) or eps_table.shape != (n_states, inputs.n_actions):
        raise BoundInputError("per-state lambda or eps_opt table has the wrong shape",
                              operation='error_bound_state_dependent')
    if np.any(lam <= 0):
        raise BoundInputError("lambda(s) must be positive", operation='error_bound_state_dependent')
    eps_star = eps_table[np.arange(n_states), a_star.action]
    penalty = np.where(alpha > 0, lam * alpha, 0.0)
    flags = []
    if simplified:
        if np.any(eps_table > ((1.0 - alpha) * lam / n_states)[:, None]):
            flags.append('eps_opt_precondition')
        with np.errstate(divide='ignore'):
            ratio = np.where(alpha < 1, 2 * eps_star * n_states / np.where(alpha < 1, 1.0 - alpha, 1.0), math.inf)
    else:
        slack = np.maximum(1.0 - alpha - eps_star * n_states / lam, 0.0)
        ratio = np.where(slack > 0, eps_star * n_states / np.where(slack > 0, slack, 1.0), math.inf)
    reward_branch = float(np.mean(ratio + penalty)) / (1.0 - inputs.gamma) * inputs.mismatch
    kl_branch = (inputs.n_actions / (1.0 - inputs.gamma) ** 2 * float(inputs.restart() @ alpha)
                 * inputs.mismatch_theta
                 + n_states / (1.0 - inputs.gamma) ** 2 * float(np.max(eps_table.sum(axis=1) / lam)))
    return _report({'reward': reward_branch, 'kl': kl_branch}, inputs.gamma, flags, inputs)


class IterationVariant(Enum):
    LOG_BARRIER = 'log_barrier'
    ALPHA_RANDOM_INIT = 'alpha_random_init'
    ALPHA_PI0_INIT = 'alpha_pi0_init'
    MULTITASK_RANDOM_INIT = 'multitask_random_init'
    MULTITASK_PI0_INIT = 'multitask_pi0_init'


def iteration_bound(variant: IterationVariant, inputs: BoundInputs) -> float:
    """
    Iteration threshold T for an eps-accurate policy.

    Raises:
        BoundInputError: If the variant needs inputs that are missing
    """
    variant = IterationVariant(variant)
    inputs.require(f'iteration_bound[{variant.value}]', 'eps')
    n_s, n_a, gamma, eps = inputs.n_states, inputs.n_actions, inputs.gamma, inputs.eps
    scale = n_s ** 2 * n_a ** 2 / eps ** 2
    if variant is IterationVariant.LOG_BARRIER:
        return 320 * scale * inputs.mismatch ** 2 / (1 - gamma) ** 6
    if variant is IterationVariant.ALPHA_RANDOM_INIT:
        inputs.require('iteration_bound[alpha_random_init]', 'alpha')
        return 80 * mean_kappa(inputs.alpha, n_a) ** 2 * scale * inputs.mismatch ** 2 / (1 - gamma) ** 6
    if variant is IterationVariant.ALPHA_PI0_INIT:
        inputs.require('iteration_bound[alpha_pi0_init]', 'alpha', 'inv_mu_inf')
        mean_alpha = float(inputs.restart() @ inputs.alpha.alpha)
        return 320 * scale / (1 - gamma) ** 7 * inputs.mismatch ** 2 * inputs.inv_mu_inf * mean_alpha
    inputs.require(f'iteration_bound[{variant.value}]', 'task_alphas')
    task_alphas = np.atleast_2d(np.asarray(inputs.task_alphas, dtype=float))
    if variant is IterationVariant.MULTITASK_RANDOM_INIT:
        inputs.require('iteration_bound[multitask_random_init]', 'task_mismatch')
        task_mismatch = np.asarray(inputs.task_mismatch, dtype=float)
        kappas = np.array([[kappa(float(a), n_a) for a in row] for row in task_alphas])
        return 80 * scale / (1 - gamma) ** 6 * float(np.mean(kappas * task_mismatch[:, None] ** 2))
    inputs.require('iteration_bound[multitask_pi0_init]', 'inv_mu_inf')
    mean_alpha = float(np.mean(task_alphas @ inputs.restart()))
    return 320 * scale / (1 - gamma) ** 7 * inputs.inv_mu_inf ** 3 * mean_alpha


def lambda_state_dependent(eps: float, gamma: float, alpha: AlphaProfile, mismatch: float) -> StateLambda:
    """
    lambda(s) = eps (1 - gamma) / (2 alpha(s) m) and
    eps_opt(s) = min((1 - alpha(s)) eps (1 - gamma) / (4 |S| m), (1 - alpha(s)) lambda(s) / |S|).

    States with alpha(s) = 0 get lambda(s) = +inf.
    """
    a = alpha.alpha
    n_states = len(a)
    with np.errstate(divide='ignore'):
        lam = np.where(a > 0, eps * (1.0 - gamma) / (2.0 * np.where(a > 0, a, 1.0) * mismatch), math.inf)
    first = (1.0 - a) * eps * (1.0 - gamma) / (4.0 * n_states * mismatch)
    with np.errstate(invalid='ignore'):
        second = np.where(np.isinf(lam), math.inf, (1.0 - a) * lam / n_states)
    return StateLambda(lam=lam, eps_opt=np.minimum(first, second))


@dataclass(frozen=True)
class VerificationRecord:
    mdp_id: int
    pi0_kind: str
    lam: float
    eps_opt: float
    gap: float
    bound_kappa: float
    bound_tight: float
    holds_kappa: bool
    holds_tight: bool
    converged: bool = True
    updates: int = 0
    grad_inf_norm: float = 0.0
    mismatch: float = 1.0
    mismatch_theta: float = 1.0

    CSV_FIELDS = ('mdp_id', 'pi0_kind', 'lambda', 'eps_opt', 'gap', 'bound_kappa', 'bound_tight',
                  'holds_kappa', 'holds_tight')

    def to_row(self) -> Dict[str, Any]:
        row = asdict(self)
        row['lambda'] = row.pop('lam')
        return row


def _stationary_point(mdp: Mdp, spec: RegularizerSpec, default: DefaultPolicy, init: SoftmaxParams,
                      eps_opt: float, max_iterations: int, fallback_updates: int) -> Tuple[SoftmaxParams, int]:
    shape = init.theta.shape

    def negated(flat: np.ndarray):
        params = SoftmaxParams(flat.reshape(shape))
        return (-objective(mdp, params, spec, default),
                -exact_gradient(mdp, params, spec, default).ravel())

    result = minimize(negated, init.theta.ravel(), jac=True, method='L-BFGS-B',
                      options={'gtol': 0.5 * eps_opt, 'ftol': 0.0,
                               'maxiter': max_iterations, 'maxfun': 4 * max_iterations})
    params = SoftmaxParams(result.x.reshape(shape))
    updates = int(result.nit)
    grad_norm = float(np.max(np.abs(exact_gradient(mdp, params, spec, default))))
    if grad_norm > eps_opt and fallback_updates > 0:
        logger.debug(f"L-BFGS-B stopped at |grad|={grad_norm:.3e}; continuing with exact ascent")
        config = OptimConfig(eta=1.0 / smoothness_beta(spec.lam, mdp.n_states, mdp.gamma),
                             max_updates=fallback_updates, grad_tol=eps_opt, mode=Mode.EXACT,
                             history_stride=fallback_updates)
        run = run_exact(mdp, spec, default, config, params)
        params, updates = run.final_params, updates + run.updates
    return params, updates


def verify_error_bound(mdp: Mdp, default: DefaultPolicy, lam: float, seed: int, mdp_id: int = 0,
                       pi0_kind: str = 'custom', master_seed: int = 0, max_iterations: int = 20000,
                       fallback_updates: int = 20000) -> VerificationRecord:
    """
    Compare the true value gap at an approximate stationary point with the bounds.

    The fixed-default objective is driven to ||grad||_inf <= lambda/(2|S||A|)
    from a seeded random initialization (L-BFGS-B, then exact ascent with
    step 1/beta_lambda if needed). The gap V*(rho) - V^{pi_theta}(rho) is then
    checked against error_bound_kappa and error_bound_tight.

    Raises:
        ValidationError: If mu is not strictly positive
    """
    if not mdp.mu_is_positive:
        raise ValidationError("bound verification needs mu(s) > 0 in every state",
                              operation='verify_error_bound')
    eps_opt = lam / (2 * mdp.n_states * mdp.n_actions)
    spec = RegularizerSpec(RegularizerKind.FIXED_DEFAULT_KL, lam)
    rng = stream(seed, mdp_id, Purpose.INIT, master_seed)
    init = SoftmaxParams(0.1 * rng.standard_normal((mdp.n_states, mdp.n_actions)))
    params, updates = _stationary_point(mdp, spec, default, init, eps_opt, max_iterations, fallback_updates)

    grad_norm = float(np.max(np.abs(exact_gradient(mdp, params, spec, default))))
    converged = grad_norm <= eps_opt
    if not converged:
        logger.warning(f"MDP {mdp_id} ({pi0_kind}): stopping condition not met (|grad|={grad_norm:.3e} "
                       f"> {eps_opt:.3e})")
    pi_star, star_eval = solve_optimal(mdp)
    policy = params.policy()
    gap = float(mdp.rho @ star_eval.v - mdp.rho @ evaluate(mdp, policy).v)
    mismatch = mismatch_coefficient(visitation(mdp, pi_star.as_table(), mdp.rho), mdp.mu)
    mismatch_theta = mismatch_coefficient(visitation(mdp, policy, mdp.rho), mdp.mu)
    inputs = BoundInputs(n_states=mdp.n_states, n_actions=mdp.n_actions, gamma=mdp.gamma, lam=lam,
                         eps_opt=eps_opt, alpha=alpha_profile(pi_star, default.probs()),
                         mismatch=mismatch, mismatch_theta=mismatch_theta,
                         inv_mu_inf=float(np.max(1.0 / mdp.mu)), mu=mdp.mu)
    bound_kappa = error_bound_kappa(inputs).bound_value
    bound_tight = error_bound_tight(inputs).bound_value
    record = VerificationRecord(mdp_id=mdp_id, pi0_kind=pi0_kind, lam=lam, eps_opt=eps_opt, gap=gap,
                                bound_kappa=bound_kappa, bound_tight=bound_tight,
                                holds_kappa=gap <= bound_kappa + HOLD_TOL,
                                holds_tight=gap <= bound_tight + HOLD_TOL,
                                converged=converged, updates=updates, grad_inf_norm=grad_norm,
                                mismatch=mismatch, mismatch_theta=mismatch_theta)
    logger.debug(f"MDP {mdp_id} ({pi0_kind}): gap={gap:.3e} kappa={bound_kappa:.3e} tight={bound_tight:.3e}")
    return record


SUITE_KINDS = ('optimal', 'uniform', 'corrupted')
SUITE_CORRUPTION = 0.25


def suite_mdp(mdp_id: int, gamma: float, master_seed: int = 0,
              state_range: Tuple[int, int] = (3, 6), action_range: Tuple[int, int] = (2, 4)) -> Mdp:
    """Random MDP number mdp_id of the verification suite, with uniform mu = rho."""
    rng = stream(mdp_id, 0, Purpose.SUITE, master_seed)
    n_states = int(rng.integers(state_range[0], state_range[1] + 1))
    n_actions = int(rng.integers(action_range[0], action_range[1] + 1))
    mdp = random_mdp(rng, n_states, n_actions, gamma, uniform_mu=True)
    return mdp.with_starts(rho=mdp.mu)


def suite_defaults(mdp: Mdp, pi_star: DeterministicPolicy) -> Dict[str, DefaultPolicy]:
    """The optimal policy, the uniform policy and a corrupted optimal policy as defaults."""
    return {
        'optimal': DefaultPolicy.fixed(pi_star.as_table()),
        'uniform': DefaultPolicy.uniform(mdp.n_states, mdp.n_actions),
        'corrupted': DefaultPolicy.fixed(corrupt_deterministic(pi_star, SUITE_CORRUPTION)),
    }


def verify_suite_mdp(mdp_id: int, gamma: float, lam: float, master_seed: int = 0) -> List[VerificationRecord]:
    """Verification records for one suite MDP, one per default kind."""
    mdp = suite_mdp(mdp_id, gamma, master_seed)
    pi_star, _ = solve_optimal(mdp)
    defaults = suite_defaults(mdp, pi_star)
    return [verify_error_bound(mdp, defaults[kind], lam, seed=index, mdp_id=mdp_id, pi0_kind=kind,
                               master_seed=master_seed)
            for index, kind in enumerate(SUITE_KINDS)]
