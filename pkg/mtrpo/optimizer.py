"""
Regularized policy gradient ascent.

Two modes share one record format: exact mode ascends the analytic gradient
computed from exact evaluation and visitation, sampled mode ascends the
REINFORCE estimate built from B trajectories per update. Learned default
policies are distilled after every sampled update once the environment steps
spent before that update's batch reach the regularizer's distill_delay.
"""

import logging
from dataclasses import dataclass, fields
from enum import Enum
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, NumericalError
from .mdp_core import Evaluation, Mdp, SoftmaxParams, evaluate, visitation
from .regularizers import (DefaultKind, DefaultPolicy, RegularizerSpec, default_update,
                           omega_grad, omega_value)
from .rng import Purpose, categorical, stream

logger = logging.getLogger('mtrpo.optimizer')

Step = Tuple[int, int, float]
Trajectory = Tuple[Step, ...]


class Mode(Enum):
    EXACT = 'exact'
    SAMPLED = 'sampled'


class Termination(Enum):
    GRAD_TOL = 'grad_tol'
    STEP_BUDGET = 'step_budget'
    UPDATE_BUDGET = 'update_budget'


@dataclass(frozen=True)
class OptimConfig:
    """
    Optimizer settings.

    Attributes:
        eta: Ascent step size
        max_env_steps: Environment-transition budget (sampled mode)
        max_updates: Update budget; in sampled mode 0 means unlimited
        grad_tol: Stop when the gradient sup norm is at most this; 0 disables
        batch_size: Trajectories per sampled update
        horizon_cutoff: Maximum trajectory length
        mode: Exact or sampled gradients
        seed: Run seed used when no stream is passed in
        eta_reg: Distillation step size for learned defaults
        history_stride: Record one history entry every this many updates
    """

    eta: float
    max_env_steps: int = 0
    max_updates: int = 0
    grad_tol: float = 0.0
    batch_size: int = 1
    horizon_cutoff: int = 200
    mode: Mode = Mode.EXACT
    seed: int = 0
    eta_reg: float = 0.01
    history_stride: int = 1

    def __post_init__(self):
        object.__setattr__(self, 'mode', Mode(self.mode))
        if not self.eta > 0:
            raise ConfigError(f"eta must be positive, got {self.eta}", operation='OptimConfig')
        if self.batch_size < 1 or self.horizon_cutoff < 1 or self.history_stride < 1:
            raise ConfigError("batch_size, horizon_cutoff and history_stride must be at least 1",
                              operation='OptimConfig')
        if self.max_env_steps < 0 or self.max_updates < 0 or self.grad_tol < 0:
            raise ConfigError("budgets and grad_tol must be non-negative", operation='OptimConfig')
        if self.eta_reg < 0:
            raise ConfigError("eta_reg must be non-negative", operation='OptimConfig')

    def to_dict(self) -> Dict[str, Any]:
        document = {f.name: getattr(self, f.name) for f in fields(self)}
        document['mode'] = self.mode.value
        return document

    @classmethod
    def from_dict(cls, document: Dict[str, Any]) -> 'OptimConfig':
        known = {f.name for f in fields(cls)}
        unknown = set(document) - known
        if unknown:
            raise ConfigError(f"Unknown optimizer fields: {', '.join(sorted(unknown))}",
                              operation='OptimConfig.from_dict')
        return cls(**document)


class HistoryRecord(NamedTuple):
    update_index: int
    env_steps: int
    value_rho: float
    value_mu: float
    objective: float
    grad_inf_norm: float
    grad_l2_norm: float
    episode_reward: float


@dataclass(frozen=True)
class RunResult:
    final_params: SoftmaxParams
    history: Tuple[HistoryRecord, ...]
    terminated_by: Termination
    final_default: Optional[DefaultPolicy] = None
    env_steps: int = 0
    updates: int = 0


def objective(mdp: Mdp, params: SoftmaxParams, spec: RegularizerSpec,
              default: Optional[DefaultPolicy]) -> float:
    """V^{pi_theta}(mu) minus the active penalty."""
    v = evaluate(mdp, params.policy()).v
    return float(mdp.mu @ v) - omega_value(spec, params, default, mdp)


def _value_gradient(mdp: Mdp, params: SoftmaxParams) -> Tuple[np.ndarray, Evaluation]:
    policy = params.policy()
    evaluation = evaluate(mdp, policy)
    d_mu = visitation(mdp, policy, mdp.mu).d
    grad = d_mu[:, None] * policy * evaluation.adv / (1.0 - mdp.gamma)
    return grad, evaluation


def exact_gradient(mdp: Mdp, params: SoftmaxParams, spec: RegularizerSpec,
                   default: Optional[DefaultPolicy]) -> np.ndarray:
    """
    Exact gradient of the regularized objective in theta.

    The value part is 1/(1-gamma) d_mu(s) pi(a|s) A(s, a); the penalty part
    comes from omega_grad.
    """
    grad, _ = _value_gradient(mdp, params)
    return grad + omega_grad(spec, params, default, mdp)


def _check_finite(grad: np.ndarray, update_index: int):
    if not np.all(np.isfinite(grad)):
        raise NumericalError(f"non-finite gradient at update {update_index}",
                             operation='optimizer', details={'update_index': update_index})


def _is_distilled(spec: RegularizerSpec, default: Optional[DefaultPolicy]) -> bool:
    return spec.kind.is_learned and default is not None and default.kind is DefaultKind.PARAMETRIC


def _record(mdp: Mdp, params: SoftmaxParams, spec: RegularizerSpec, default: Optional[DefaultPolicy],
            grad: np.ndarray, update_index: int, env_steps: int, episode_reward: float,
            evaluation: Optional[Evaluation] = None) -> HistoryRecord:
    if evaluation is None:
        evaluation = evaluate(mdp, params.policy())
    value_mu = float(mdp.mu @ evaluation.v)
    return HistoryRecord(
        update_index=update_index,
        env_steps=env_steps,
        value_rho=float(mdp.rho @ evaluation.v),
        value_mu=value_mu,
        objective=value_mu - omega_value(spec, params, default, mdp),
        grad_inf_norm=float(np.max(np.abs(grad))),
        grad_l2_norm=float(np.linalg.norm(grad)),
        episode_reward=episode_reward,
    )


def run_exact(mdp: Mdp, spec: RegularizerSpec, default: Optional[DefaultPolicy],
              config: OptimConfig, init: SoftmaxParams) -> RunResult:
    """
    Gradient ascent with exact gradients.

    Records the iterate before every step (update_index 0 is init) and stops
    on grad_tol or after max_updates steps. Learned defaults are distilled
    once per step with the number of earlier steps as the step counter.
    """
    params = init
    history: List[HistoryRecord] = []
    terminated = Termination.UPDATE_BUDGET
    update = 0
    while True:
        value_grad, evaluation = _value_gradient(mdp, params)
        grad = value_grad + omega_grad(spec, params, default, mdp)
        _check_finite(grad, update)
        if update % config.history_stride == 0:
            history.append(_record(mdp, params, spec, default, grad, update, 0, float('nan'), evaluation))
        if config.grad_tol > 0 and np.max(np.abs(grad)) <= config.grad_tol:
            terminated = Termination.GRAD_TOL
            break
        if update >= config.max_updates:
            break
        params = params.shifted(config.eta * grad)
        if _is_distilled(spec, default):
            default = default_update(spec, default, params, config.eta_reg, update)
        update += 1

    if history[-1].update_index != update:
        history.append(_record(mdp, params, spec, default, grad, update, 0, float('nan'), evaluation))
    logger.debug(f"Exact run finished after {update} updates ({terminated.value})")
    return RunResult(final_params=params, history=tuple(history), terminated_by=terminated,
                     final_default=default, env_steps=0, updates=update)


def sample_trajectory(mdp: Mdp, params: SoftmaxParams, rng: np.random.Generator, horizon_cutoff: int,
                      absorbing: Optional[np.ndarray] = None) -> Trajectory:
    """
    Roll out pi_theta from s_0 ~ mu.

    At least one transition is taken; the rollout stops right after entering
    an absorbing state, once gamma^t reaches 0 (later steps carry no
    gradient weight, so gamma = 0 gives one-step rollouts) or after
    horizon_cutoff transitions.

    Returns:
        Tuple of (state, action, reward) steps
    """
    if absorbing is None:
        absorbing = mdp.absorbing_states()
    policy = params.policy()
    state = categorical(rng, mdp.mu)
    steps = []
    for t in range(horizon_cutoff):
        action = categorical(rng, policy[state])
        steps.append((state, action, float(mdp.reward[state, action])))
        state = categorical(rng, mdp.transition[state, action])
        if absorbing[state] or mdp.gamma ** (t + 1) == 0.0:
            break
    return tuple(steps)


def reinforce_gradient(trajectories: Sequence[Trajectory], params: SoftmaxParams, spec: RegularizerSpec,
                       default: Optional[DefaultPolicy], mdp: Mdp) -> np.ndarray:
    """
    Batch-mean REINFORCE estimate of grad V(mu) plus the exact penalty gradient.

    Each step contributes gamma^t G_t (e_a - pi(.|s_t)) to row s_t, with G_t
    the discounted reward-to-go from t.
    """
    if not trajectories:
        raise ValueError("reinforce_gradient needs at least one trajectory")
    policy = params.policy()
    grad = np.zeros_like(policy)
    for trajectory in trajectories:
        states = np.array([step[0] for step in trajectory], dtype=int)
        actions = np.array([step[1] for step in trajectory], dtype=int)
        rewards = np.array([step[2] for step in trajectory], dtype=float)
        discounts = mdp.gamma ** np.arange(len(trajectory))
        to_go = np.zeros(len(trajectory))
        running = 0.0
        for t in range(len(trajectory) - 1, -1, -1):
            running = rewards[t] + mdp.gamma * running
            to_go[t] = running
        weight = discounts * to_go
        np.add.at(grad, (states, actions), weight)
        np.add.at(grad, states, -weight[:, None] * policy[states])
    grad /= len(trajectories)
    return grad + omega_grad(spec, params, default, mdp)


def run_sampled(mdp: Mdp, spec: RegularizerSpec, default: Optional[DefaultPolicy],
                config: OptimConfig, init: SoftmaxParams,
                rng: Optional[np.random.Generator] = None) -> RunResult:
    """
    Sampled regularized policy gradient.

    Repeats: sample batch_size trajectories, take one ascent step with the
    REINFORCE estimate, then distill a learned default. Stops when the
    environment-step budget is spent, when max_updates (if positive) is
    reached, or on grad_tol.

    Args:
        rng: Trajectory stream; defaults to the stream of config.seed
    """
    if rng is None:
        rng = stream(config.seed, 0, Purpose.TRAJECTORY)
    absorbing = mdp.absorbing_states()
    params = init
    history: List[HistoryRecord] = []
    terminated = Termination.STEP_BUDGET
    env_steps = 0
    update = 0
    grad = None
    episode_reward = float('nan')
    while True:
        if env_steps >= config.max_env_steps:
            terminated = Termination.STEP_BUDGET
            break
        if config.max_updates > 0 and update >= config.max_updates:
            terminated = Termination.UPDATE_BUDGET
            break
        batch = [sample_trajectory(mdp, params, rng, config.horizon_cutoff, absorbing)
                 for _ in range(config.batch_size)]
        steps_before = env_steps
        env_steps += sum(len(trajectory) for trajectory in batch)
        episode_reward = float(np.mean([sum(step[2] for step in trajectory) for trajectory in batch]))
        grad = reinforce_gradient(batch, params, spec, default, mdp)
        _check_finite(grad, update)
        params = params.shifted(config.eta * grad)
        update += 1
        if _is_distilled(spec, default):
            default = default_update(spec, default, params, config.eta_reg, steps_before)
        if update % config.history_stride == 0:
            history.append(_record(mdp, params, spec, default, grad, update, env_steps, episode_reward))
        if config.grad_tol > 0 and np.max(np.abs(grad)) <= config.grad_tol:
            terminated = Termination.GRAD_TOL
            break

    if grad is not None and (not history or history[-1].update_index != update):
        history.append(_record(mdp, params, spec, default, grad, update, env_steps, episode_reward))
    logger.debug(f"Sampled run finished: {update} updates, {env_steps} env steps ({terminated.value})")
    return RunResult(final_params=params, history=tuple(history), terminated_by=terminated,
                     final_default=default, env_steps=env_steps, updates=update)
