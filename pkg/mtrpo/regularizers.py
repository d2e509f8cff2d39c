"""
Regularization functionals, default policies and distillation updates.

Every penalty is a state-uniform average: state s contributes with weight
lambda(s) / |S|. Values returned by omega_value are the penalty subtracted
from the value function; omega_grad returns the gradient of the objective
contribution, i.e. of minus the penalty, with respect to theta.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional, Union

import numpy as np
from scipy.special import log_softmax, softmax

from .errors import ShapeError, ValidationError
from .mdp_core import Mdp, SoftmaxParams

logger = logging.getLogger('mtrpo.regularizers')

PROB_FLOOR = 1e-12
TABLE_TOL = 1e-10


class RegularizerKind(Enum):
    NONE = 'none'
    ENTROPY = 'entropy'
    LOG_BARRIER = 'log_barrier'
    FIXED_DEFAULT_KL = 'fixed_default_kl'
    FORWARD_KL_LEARNED = 'forward_kl'
    REVERSE_KL_LEARNED = 'reverse_kl'
    DISTRAL = 'distral'
    HABIT_DEFAULT = 'habit'

    @property
    def is_learned(self) -> bool:
        return self in (RegularizerKind.FORWARD_KL_LEARNED, RegularizerKind.REVERSE_KL_LEARNED,
                        RegularizerKind.DISTRAL)

    @classmethod
    def parse(cls, text: Union[str, 'RegularizerKind']) -> 'RegularizerKind':
        """Accept the value, the member name or the CamelCase name in any case."""
        if isinstance(text, cls):
            return text
        wanted = str(text).replace('-', '').replace('_', '').lower()
        for kind in cls:
            if wanted in (kind.value.replace('_', ''), kind.name.replace('_', '').lower()):
                return kind
        aliases = {'forwardkllearned': cls.FORWARD_KL_LEARNED, 'reversekllearned': cls.REVERSE_KL_LEARNED,
                   'habitdefault': cls.HABIT_DEFAULT, 'logbarrier': cls.LOG_BARRIER}
        if wanted in aliases:
            return aliases[wanted]
        raise ValidationError(f"Unknown regularizer kind: {text}", operation='RegularizerKind.parse')


@dataclass(frozen=True)
class RegularizerSpec:
    """
    Active penalty, its weight and the distillation delay.

    Attributes:
        kind: Which penalty is active
        lam: Scalar weight or one weight per state
        distill_delay: Environment steps before a learned default starts
            updating; may be +inf, must be 0 for non-learned kinds
    """

    kind: RegularizerKind
    lam: Union[float, np.ndarray] = 0.0
    distill_delay: float = 0

    def __post_init__(self):
        object.__setattr__(self, 'kind', RegularizerKind.parse(self.kind))
        lam = np.asarray(self.lam, dtype=float)
        if lam.ndim == 0:
            lam = float(lam)
        else:
            lam = np.array(lam, copy=True)
            lam.setflags(write=False)
        object.__setattr__(self, 'lam', lam)
        if np.any(np.asarray(lam) < 0) or np.any(np.isnan(lam)):
            raise ValidationError("lambda must be non-negative", operation='RegularizerSpec')
        if self.distill_delay < 0:
            raise ValidationError("distill_delay must be non-negative", operation='RegularizerSpec')
        if self.distill_delay != 0 and not self.kind.is_learned:
            raise ValidationError(f"distill_delay is only meaningful for learned defaults, not {self.kind.value}",
                                  operation='RegularizerSpec')

    def state_weights(self, n_states: int) -> np.ndarray:
        """Per-state weight lambda(s) / |S|."""
        lam = np.asarray(self.lam, dtype=float)
        if lam.ndim == 0:
            return np.full(n_states, float(lam) / n_states)
        if lam.shape != (n_states,):
            raise ShapeError(f"per-state lambda has length {lam.shape[0]}, expected {n_states}",
                             operation='RegularizerSpec.state_weights')
        return lam / n_states

    def to_dict(self) -> Dict[str, Any]:
        lam = self.lam if isinstance(self.lam, float) else self.lam.tolist()
        return {'kind': self.kind.value, 'lambda': lam, 'distill_delay': self.distill_delay}

    @classmethod
    def from_dict(cls, document: Dict[str, Any]) -> 'RegularizerSpec':
        return cls(kind=document['kind'], lam=document.get('lambda', 0.0),
                   distill_delay=document.get('distill_delay', 0))


class DefaultKind(Enum):
    UNIFORM = 'uniform'
    FIXED_TABLE = 'fixed_table'
    PARAMETRIC = 'parametric'


@dataclass(frozen=True)
class DefaultPolicy:
    """The reference policy pi_0: uniform, a fixed table, or softmax(phi)."""

    kind: DefaultKind
    table: Optional[np.ndarray] = None
    params: Optional[SoftmaxParams] = None

    def __post_init__(self):
        if self.kind is DefaultKind.PARAMETRIC:
            if self.params is None:
                raise ValidationError("parametric default needs params", operation='DefaultPolicy')
            return
        if self.table is None:
            raise ValidationError(f"{self.kind.value} default needs a table", operation='DefaultPolicy')
        table = np.array(self.table, dtype=float, copy=True)
        if table.ndim != 2:
            raise ShapeError("default table must be (states, actions)", operation='DefaultPolicy')
        if np.any(table < 0) or np.max(np.abs(table.sum(axis=1) - 1.0)) > TABLE_TOL:
            raise ValidationError("default rows must be probability vectors", operation='DefaultPolicy')
        table.setflags(write=False)
        object.__setattr__(self, 'table', table)

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> 'DefaultPolicy':
        return cls(DefaultKind.UNIFORM, table=np.full((n_states, n_actions), 1.0 / n_actions))

    @classmethod
    def fixed(cls, table: np.ndarray) -> 'DefaultPolicy':
        return cls(DefaultKind.FIXED_TABLE, table=table)

    @classmethod
    def parametric(cls, params: SoftmaxParams) -> 'DefaultPolicy':
        return cls(DefaultKind.PARAMETRIC, params=params)

    @property
    def shape(self):
        return self.params.theta.shape if self.kind is DefaultKind.PARAMETRIC else self.table.shape

    def probs(self) -> np.ndarray:
        if self.kind is DefaultKind.PARAMETRIC:
            return self.params.policy()
        return self.table

    def log_probs(self) -> np.ndarray:
        if self.kind is DefaultKind.PARAMETRIC:
            return np.maximum(log_softmax(self.params.theta, axis=1), np.log(PROB_FLOOR))
        return np.log(np.maximum(self.table, PROB_FLOOR))


def _uniform_default(n_states: int, n_actions: int) -> DefaultPolicy:
    return DefaultPolicy.uniform(n_states, n_actions)


def _target_default(spec: RegularizerSpec, default: DefaultPolicy, shape) -> DefaultPolicy:
    if spec.kind is RegularizerKind.LOG_BARRIER:
        return _uniform_default(*shape)
    if default is None:
        raise ValidationError(f"{spec.kind.value} needs a default policy", operation='omega')
    if default.shape != shape:
        raise ShapeError(f"default policy shape {default.shape} does not match theta {shape}",
                         operation='omega')
    return default


def _kl_rows(p: np.ndarray, log_p: np.ndarray, log_q: np.ndarray) -> np.ndarray:
    return np.sum(p * (log_p - log_q), axis=1)


def _state_terms(spec: RegularizerSpec, params: SoftmaxParams, default: DefaultPolicy) -> np.ndarray:
    theta = params.theta
    pi = softmax(theta, axis=1)
    log_pi = log_softmax(theta, axis=1)
    kind = spec.kind
    if kind is RegularizerKind.NONE:
        return np.zeros(theta.shape[0])
    if kind is RegularizerKind.ENTROPY:
        return np.sum(pi * log_pi, axis=1)
    target = _target_default(spec, default, theta.shape)
    p0, log_p0 = target.probs(), target.log_probs()
    if kind in (RegularizerKind.LOG_BARRIER, RegularizerKind.FIXED_DEFAULT_KL,
                RegularizerKind.HABIT_DEFAULT, RegularizerKind.FORWARD_KL_LEARNED):
        return _kl_rows(p0, log_p0, log_pi)
    reverse = _kl_rows(pi, log_pi, log_p0)
    if kind is RegularizerKind.REVERSE_KL_LEARNED:
        return reverse
    # Distral: KL(pi, pi_0) - H(pi)
    return reverse + np.sum(pi * log_pi, axis=1)


def omega_value(spec: RegularizerSpec, params: SoftmaxParams, default: Optional[DefaultPolicy],
                mdp: Mdp) -> float:
    """
    Penalty subtracted from V in the regularized objective.

    Args:
        spec: Active regularizer
        params: Learner parameters theta
        default: Reference policy (ignored by None, Entropy and LogBarrier)
        mdp: Task, used for the state count

    Returns:
        sum_s lambda(s)/|S| * penalty_s
    """
    if params.theta.shape != (mdp.n_states, mdp.n_actions):
        raise ShapeError("theta does not match the MDP", operation='omega_value')
    weights = spec.state_weights(mdp.n_states)
    return float(weights @ _state_terms(spec, params, default))


def omega_grad(spec: RegularizerSpec, params: SoftmaxParams, default: Optional[DefaultPolicy],
               mdp: Mdp) -> np.ndarray:
    """Gradient in theta of the objective contribution -omega_value."""
    theta = params.theta
    if theta.shape != (mdp.n_states, mdp.n_actions):
        raise ShapeError("theta does not match the MDP", operation='omega_grad')
    weights = spec.state_weights(mdp.n_states)[:, None]
    kind = spec.kind
    if kind is RegularizerKind.NONE:
        return np.zeros_like(theta)
    pi = softmax(theta, axis=1)
    log_pi = log_softmax(theta, axis=1)
    neg_entropy = np.sum(pi * log_pi, axis=1, keepdims=True)
    if kind is RegularizerKind.ENTROPY:
        return -weights * pi * (log_pi - neg_entropy)
    target = _target_default(spec, default, theta.shape)
    p0, log_p0 = target.probs(), target.log_probs()
    if kind in (RegularizerKind.LOG_BARRIER, RegularizerKind.FIXED_DEFAULT_KL,
                RegularizerKind.HABIT_DEFAULT, RegularizerKind.FORWARD_KL_LEARNED):
        row_mass = np.sum(p0, axis=1, keepdims=True)
        return weights * (p0 - pi * row_mass)
    log_ratio = log_pi - log_p0
    reverse = np.sum(pi * log_ratio, axis=1, keepdims=True)
    grad = -weights * pi * (log_ratio - reverse)
    if kind is RegularizerKind.DISTRAL:
        grad = grad - weights * pi * (log_pi - neg_entropy)
    return grad


def default_update(spec: RegularizerSpec, default: DefaultPolicy, learner: SoftmaxParams,
                   eta_reg: float, t: float) -> DefaultPolicy:
    """
    One distillation step on the parametric default.

    Reverse-KL and Distral descend mean_s KL(pi_theta, pi_phi); forward-KL
    descends mean_s KL(pi_phi, pi_theta). Before t reaches distill_delay the
    default is returned unchanged.

    Raises:
        ValidationError: If the default is not parametric or the kind is not learned
    """
    if default.kind is not DefaultKind.PARAMETRIC:
        raise ValidationError("default_update needs a parametric default", operation='default_update')
    if not spec.kind.is_learned:
        raise ValidationError(f"{spec.kind.value} does not learn its default", operation='default_update')
    if t < spec.distill_delay:
        return default
    phi = default.params.theta
    if phi.shape != learner.theta.shape:
        raise ShapeError("default and learner parameters differ in shape", operation='default_update')
    n_states = phi.shape[0]
    pi_phi = softmax(phi, axis=1)
    pi_theta = learner.policy()
    if spec.kind is RegularizerKind.FORWARD_KL_LEARNED:
        log_ratio = log_softmax(phi, axis=1) - log_softmax(learner.theta, axis=1)
        kl = np.sum(pi_phi * log_ratio, axis=1, keepdims=True)
        grad = pi_phi * (log_ratio - kl) / n_states
    else:
        grad = (pi_phi - pi_theta) / n_states
    return DefaultPolicy.parametric(default.params.shifted(-eta_reg * grad))
