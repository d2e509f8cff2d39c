"""
Finite MDPs and exact tabular solvers.

This module holds the MDP container, the softmax policy parameterization,
exact policy evaluation by direct linear solves, discounted state visitation
distributions, optimal-policy solving and the distributional distances used
by the bounds. Policies are passed around as (|S|, |A|) row-stochastic
arrays; all containers are immutable once built.
"""

import json
import logging
from dataclasses import dataclass, replace
from typing import Any, Dict, Tuple, Union

import numpy as np
from scipy.special import softmax

from .errors import NumericalError, ShapeError, ValidationError

logger = logging.getLogger('mtrpo.mdp_core')

PROB_TOL = 1e-12
DIST_TOL = 1e-10
RESIDUAL_TOL = 1e-8
VALUE_ITERATION_TOL = 1e-10
TIE_TOL = 1e-9
LOG_FLOOR = 1e-300
MAX_VALUE_ITERATIONS = 1_000_000
MAX_POLISH_ROUNDS = 50


def _frozen(values, dtype=float) -> np.ndarray:
    array = np.array(values, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


def _check_distribution(vector: np.ndarray, name: str, tol: float = PROB_TOL):
    if np.any(vector < 0) or abs(float(vector.sum()) - 1.0) > tol:
        raise ValidationError(f"{name} must be a probability vector (sum={vector.sum()!r})",
                              operation='Mdp', details={'field': name})


@dataclass(frozen=True)
class Mdp:
    """
    Finite discounted MDP.

    Attributes:
        transition: P[s, a, s'] transition probabilities
        reward: r[s, a] rewards in [0, 1]
        gamma: discount factor in [0, 1)
        rho: target start distribution used for reporting
        mu: restart distribution used for training
    """

    transition: np.ndarray
    reward: np.ndarray
    gamma: float
    rho: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'transition', _frozen(self.transition))
        object.__setattr__(self, 'reward', _frozen(self.reward))
        object.__setattr__(self, 'rho', _frozen(self.rho))
        object.__setattr__(self, 'mu', _frozen(self.mu))
        object.__setattr__(self, 'gamma', float(self.gamma))
        self._validate()

    def _validate(self):
        if self.transition.ndim != 3 or self.transition.shape[0] != self.transition.shape[2]:
            raise ShapeError(f"transition must have shape (S, A, S), got {self.transition.shape}",
                             operation='Mdp')
        n_states, n_actions, _ = self.transition.shape
        if n_states < 1 or n_actions < 1:
            raise ShapeError("an MDP needs at least one state and one action", operation='Mdp')
        if self.reward.shape != (n_states, n_actions):
            raise ShapeError(f"reward must have shape {(n_states, n_actions)}, got {self.reward.shape}",
                             operation='Mdp')
        for name in ('rho', 'mu'):
            if getattr(self, name).shape != (n_states,):
                raise ShapeError(f"{name} must have length {n_states}", operation='Mdp')
        if np.any(self.transition < 0):
            raise ValidationError("transition probabilities must be non-negative", operation='Mdp')
        row_error = np.max(np.abs(self.transition.sum(axis=2) - 1.0))
        if row_error > PROB_TOL:
            raise ValidationError(f"transition rows must sum to 1 (max error {row_error:.3e})",
                                  operation='Mdp')
        if np.any(self.reward < 0) or np.any(self.reward > 1):
            raise ValidationError("rewards must lie in [0, 1]", operation='Mdp')
        if not 0.0 <= self.gamma < 1.0:
            raise ValidationError(f"gamma must lie in [0, 1), got {self.gamma}", operation='Mdp')
        _check_distribution(self.rho, 'rho')
        _check_distribution(self.mu, 'mu')

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def mu_is_positive(self) -> bool:
        return bool(np.all(self.mu > 0))

    def absorbing_states(self) -> np.ndarray:
        """Boolean mask of states that self-loop under every action with zero reward."""
        states = np.arange(self.n_states)
        self_loop = np.all(self.transition[states, :, states] == 1.0, axis=1)
        return self_loop & np.all(self.reward == 0.0, axis=1)

    def with_starts(self, rho=None, mu=None) -> 'Mdp':
        return replace(self,
                       rho=self.rho if rho is None else rho,
                       mu=self.mu if mu is None else mu)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'n_states': self.n_states,
            'n_actions': self.n_actions,
            'gamma': self.gamma,
            'rho': self.rho.tolist(),
            'mu': self.mu.tolist(),
            'transition': self.transition.tolist(),
            'reward': self.reward.tolist(),
        }

    @classmethod
    def from_dict(cls, document: Dict[str, Any]) -> 'Mdp':
        missing = [key for key in ('n_states', 'n_actions', 'gamma', 'rho', 'mu', 'transition', 'reward')
                   if key not in document]
        if missing:
            raise ValidationError(f"MDP document is missing fields: {', '.join(missing)}",
                                  operation='Mdp.from_dict')
        mdp = cls(transition=document['transition'], reward=document['reward'],
                  gamma=document['gamma'], rho=document['rho'], mu=document['mu'])
        if (mdp.n_states, mdp.n_actions) != (document['n_states'], document['n_actions']):
            raise ShapeError("n_states/n_actions disagree with the tensors",
                             operation='Mdp.from_dict')
        return mdp

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> 'Mdp':
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class SoftmaxParams:
    """Table theta[s, a]; the policy is the row-wise softmax of theta."""

    theta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'theta', _frozen(self.theta))
        if self.theta.ndim != 2:
            raise ShapeError("theta must be a (states, actions) table", operation='SoftmaxParams')

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> 'SoftmaxParams':
        return cls(np.zeros((n_states, n_actions)))

    @classmethod
    def from_policy(cls, policy: np.ndarray) -> 'SoftmaxParams':
        """Parameters whose softmax reproduces a strictly positive policy table."""
        return cls(np.log(np.maximum(np.asarray(policy, dtype=float), LOG_FLOOR)))

    def policy(self) -> np.ndarray:
        return softmax(self.theta, axis=1)

    def shifted(self, step: np.ndarray) -> 'SoftmaxParams':
        return SoftmaxParams(self.theta + step)


@dataclass(frozen=True)
class Evaluation:
    v: np.ndarray
    q: np.ndarray
    adv: np.ndarray


@dataclass(frozen=True)
class StateDist:
    d: np.ndarray


@dataclass(frozen=True)
class DeterministicPolicy:
    """One action index per state."""

    action: np.ndarray
    n_actions: int

    def __post_init__(self):
        object.__setattr__(self, 'action', _frozen(self.action, dtype=int))
        if np.any(self.action < 0) or np.any(self.action >= self.n_actions):
            raise ValidationError("every state must map to a valid action index",
                                  operation='DeterministicPolicy')

    def as_table(self) -> np.ndarray:
        table = np.zeros((len(self.action), self.n_actions))
        table[np.arange(len(self.action)), self.action] = 1.0
        return table


@dataclass(frozen=True)
class AlphaProfile:
    alpha: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'alpha', _frozen(self.alpha))
        if np.any(self.alpha < 0) or np.any(self.alpha > 1):
            raise ValidationError("alpha entries must lie in [0, 1]", operation='AlphaProfile')


def policy_probs(params: SoftmaxParams, s: int) -> np.ndarray:
    """Action probabilities of the softmax policy in state s."""
    return softmax(params.theta[s])


def check_policy(mdp: Mdp, policy: np.ndarray) -> np.ndarray:
    policy = np.asarray(policy, dtype=float)
    if policy.shape != (mdp.n_states, mdp.n_actions):
        raise ShapeError(f"policy must have shape {(mdp.n_states, mdp.n_actions)}, got {policy.shape}",
                         operation='check_policy')
    if np.any(policy < 0) or np.max(np.abs(policy.sum(axis=1) - 1.0)) > PROB_TOL:
        raise ValidationError("policy rows must be probability vectors", operation='check_policy')
    return policy


def _policy_dynamics(mdp: Mdp, policy: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    p_pi = np.einsum('sa,sat->st', policy, mdp.transition)
    r_pi = np.einsum('sa,sa->s', policy, mdp.reward)
    return p_pi, r_pi


def evaluate(mdp: Mdp, policy: np.ndarray) -> Evaluation:
    """
    Exact evaluation of a stochastic policy.

    Solves (I - gamma P_pi) V = r_pi directly, then derives Q and the
    advantage table.

    Raises:
        NumericalError: If the solve residual exceeds 1e-8 in sup norm
    """
    policy = check_policy(mdp, policy)
    p_pi, r_pi = _policy_dynamics(mdp, policy)
    system = np.eye(mdp.n_states) - mdp.gamma * p_pi
    v = np.linalg.solve(system, r_pi)
    residual = float(np.max(np.abs(system @ v - r_pi)))
    if residual > RESIDUAL_TOL or not np.all(np.isfinite(v)):
        raise NumericalError(f"policy evaluation residual {residual:.3e} too large",
                             operation='evaluate', details={'residual': residual})
    q = mdp.reward + mdp.gamma * np.einsum('sat,t->sa', mdp.transition, v)
    return Evaluation(v=_frozen(v), q=_frozen(q), adv=_frozen(q - v[:, None]))


def visitation(mdp: Mdp, policy: np.ndarray, start: np.ndarray) -> StateDist:
    """
    Discounted state visitation distribution d(s) = (1-gamma) sum_t gamma^t Pr(s_t = s).

    Computed by solving d^T (I - gamma P_pi) = (1 - gamma) start^T.
    """
    policy = check_policy(mdp, policy)
    start = np.asarray(start, dtype=float)
    if start.shape != (mdp.n_states,):
        raise ShapeError("start distribution has the wrong length", operation='visitation')
    _check_distribution(start, 'start', tol=DIST_TOL)
    p_pi, _ = _policy_dynamics(mdp, policy)
    d = np.linalg.solve((np.eye(mdp.n_states) - mdp.gamma * p_pi).T, (1.0 - mdp.gamma) * start)
    if np.min(d) < -DIST_TOL or abs(float(d.sum()) - 1.0) > DIST_TOL:
        raise NumericalError("visitation distribution is not a probability vector",
                             operation='visitation', details={'sum': float(d.sum()), 'min': float(d.min())})
    return StateDist(d=_frozen(np.clip(d, 0.0, None)))


def greedy_actions(values: np.ndarray, tol: float = 0.0) -> np.ndarray:
    """Per-row argmax; among entries within tol of the row max the lowest index wins."""
    values = np.asarray(values, dtype=float)
    best = values.max(axis=1, keepdims=True)
    return np.argmax(values >= best - tol, axis=1)


def solve_optimal(mdp: Mdp) -> Tuple[DeterministicPolicy, Evaluation]:
    """
    Optimal deterministic policy and its exact evaluation.

    Runs value iteration to a sup-norm change below 1e-10, takes the greedy
    policy (ties to the lowest action index), then re-greedifies against
    exact Q values until the policy is stable.
    """
    v = np.zeros(mdp.n_states)
    for iteration in range(MAX_VALUE_ITERATIONS):
        q = mdp.reward + mdp.gamma * np.einsum('sat,t->sa', mdp.transition, v)
        v_next = q.max(axis=1)
        delta = float(np.max(np.abs(v_next - v)))
        v = v_next
        if delta < VALUE_ITERATION_TOL:
            break
    else:
        logger.warning(f"Value iteration stopped after {MAX_VALUE_ITERATIONS} sweeps (delta={delta:.3e})")

    q = mdp.reward + mdp.gamma * np.einsum('sat,t->sa', mdp.transition, v)
    actions = greedy_actions(q, TIE_TOL)
    for _ in range(MAX_POLISH_ROUNDS):
        evaluation = evaluate(mdp, DeterministicPolicy(actions, mdp.n_actions).as_table())
        improved = greedy_actions(evaluation.q, TIE_TOL)
        if np.array_equal(improved, actions):
            break
        actions = improved
    policy = DeterministicPolicy(actions, mdp.n_actions)
    logger.debug(f"Solved MDP with {mdp.n_states} states after {iteration + 1} value-iteration sweeps")
    return policy, evaluate(mdp, policy.as_table())


def tv_distance(p: np.ndarray, q: np.ndarray) -> Union[float, np.ndarray]:
    """Total variation distance, half the L1 distance, along the last axis."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ShapeError(f"cannot compare distributions of shapes {p.shape} and {q.shape}",
                         operation='tv_distance')
    distance = 0.5 * np.sum(np.abs(p - q), axis=-1)
    return float(distance) if np.ndim(distance) == 0 else distance


def mismatch_coefficient(d: Union[StateDist, np.ndarray], mu: np.ndarray) -> float:
    """Distribution mismatch coefficient max_s d(s) / mu(s)."""
    d = d.d if isinstance(d, StateDist) else np.asarray(d, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if d.shape != mu.shape:
        raise ShapeError("d and mu must have the same length", operation='mismatch_coefficient')
    if np.any(mu <= 0):
        raise ValidationError("mu must be strictly positive in every state",
                              operation='mismatch_coefficient')
    return float(np.max(d / mu))


def alpha_profile(pi_star: DeterministicPolicy, pi0: np.ndarray) -> AlphaProfile:
    """Per-state TV distance between the optimal action and a default policy."""
    pi0 = np.asarray(pi0, dtype=float)
    if pi0.shape != (len(pi_star.action), pi_star.n_actions):
        raise ShapeError("default policy table does not match the optimal policy",
                         operation='alpha_profile')
    mass = pi0[np.arange(len(pi_star.action)), pi_star.action]
    return AlphaProfile(np.clip(1.0 - mass, 0.0, 1.0))


def max_corruption(n_actions: int) -> float:
    """Largest TV distance a uniform mixture can put between itself and a deterministic policy."""
    return 1.0 - 1.0 / n_actions


def corrupt_deterministic(policy: DeterministicPolicy, zeta: float) -> np.ndarray:
    """
    Table (1 - w) delta_{a*} + w U_A with w = zeta / (1 - 1/|A|).

    Each row is at TV distance exactly zeta from the deterministic policy.

    Raises:
        ValidationError: If zeta lies outside [0, 1 - 1/|A|]
    """
    limit = max_corruption(policy.n_actions)
    if not 0.0 <= zeta <= limit + PROB_TOL:
        raise ValidationError(f"zeta must lie in [0, {limit:g}] for {policy.n_actions} actions, got {zeta}",
                              operation='corrupt_deterministic')
    table = policy.as_table()
    if zeta == 0.0:
        return table
    weight = min(zeta / limit, 1.0)
    return (1.0 - weight) * table + weight / policy.n_actions


def performance_difference(mdp: Mdp, new_policy: np.ndarray, old_policy: np.ndarray,
                           start: np.ndarray) -> Tuple[float, float]:
    """
    Both sides of the performance difference identity.

    Returns:
        (V_new(start) - V_old(start),
         1/(1-gamma) * sum_{s,a} d_new(s) new(a|s) A_old(s, a))
    """
    start = np.asarray(start, dtype=float)
    new_eval = evaluate(mdp, new_policy)
    old_eval = evaluate(mdp, old_policy)
    d_new = visitation(mdp, new_policy, start).d
    lhs = float(start @ new_eval.v - start @ old_eval.v)
    rhs = float(np.sum(d_new[:, None] * np.asarray(new_policy) * old_eval.adv) / (1.0 - mdp.gamma))
    return lhs, rhs


def random_mdp(rng: np.random.Generator, n_states: int, n_actions: int, gamma: float,
               uniform_mu: bool = True) -> Mdp:
    """Random MDP with Dirichlet transitions, uniform [0, 1] rewards and random rho."""
    transition = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    transition /= transition.sum(axis=2, keepdims=True)
    reward = rng.random((n_states, n_actions))
    rho = rng.dirichlet(np.ones(n_states))
    rho /= rho.sum()
    if uniform_mu:
        mu = np.full(n_states, 1.0 / n_states)
    else:
        mu = rng.dirichlet(np.ones(n_states))
        mu /= mu.sum()
    return Mdp(transition=transition, reward=reward, gamma=gamma, rho=rho, mu=mu)
