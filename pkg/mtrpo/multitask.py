"""
Multitask default policies.

A task family yields MDPs over shared state and action spaces. The habit
table xi(s, a) averages, over solved tasks, the indicator that a was the
greedy action in s; a tempered softmax of xi becomes the default policy of
the next task (TVPO). The same task loop runs learned-default baselines,
which carry a distilled softmax default from task to task, and fixed
baselines. The TV and KL barycenters of deterministic policies are the
greedy policy over xi; a brute-force search over a simplex lattice checks
that, and the concentration experiment measures how fast an estimated
barycenter approaches the population one.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import softmax
from scipy.stats import spearmanr

from .errors import ShapeError, ValidationError
from .mdp_core import (AlphaProfile, DeterministicPolicy, Mdp, SoftmaxParams, alpha_profile,
                       corrupt_deterministic, greedy_actions, max_corruption, solve_optimal)
from .optimizer import Mode, OptimConfig, RunResult, run_exact, run_sampled
from .regularizers import DefaultKind, DefaultPolicy, RegularizerKind, RegularizerSpec
from .rng import Purpose, sample_actions, stream

logger = logging.getLogger('mtrpo.multitask')

BARYCENTER_TIE_TOL = 1e-12
HABIT_TOL = 1e-10


@dataclass(frozen=True)
class TaskFamily:
    """A task distribution: sampler(rng) -> Mdp with the family's shapes."""

    sampler: Callable[[np.random.Generator], Mdp]
    n_states: int
    n_actions: int
    description: str = ''

    def sample(self, rng: np.random.Generator) -> Mdp:
        mdp = self.sampler(rng)
        if (mdp.n_states, mdp.n_actions) != (self.n_states, self.n_actions):
            raise ShapeError(f"family '{self.description}' sampled a task of shape "
                             f"{(mdp.n_states, mdp.n_actions)}", operation='TaskFamily.sample')
        return mdp


@dataclass(frozen=True)
class HabitTable:
    xi: np.ndarray
    k: int = 0

    def __post_init__(self):
        xi = np.array(self.xi, dtype=float, copy=True)
        if xi.ndim != 2:
            raise ShapeError("xi must be a (states, actions) table", operation='HabitTable')
        if np.any(xi < -HABIT_TOL) or np.any(xi > 1 + HABIT_TOL):
            raise ValidationError("xi entries must lie in [0, 1]", operation='HabitTable')
        if self.k >= 1 and np.max(np.abs(xi.sum(axis=1) - 1.0)) > HABIT_TOL:
            raise ValidationError("xi rows must sum to 1 once a task has been observed",
                                  operation='HabitTable')
        xi.setflags(write=False)
        object.__setattr__(self, 'xi', xi)

    @classmethod
    def initial(cls, n_states: int, n_actions: int) -> 'HabitTable':
        """xi^0 = uniform, no tasks observed."""
        return cls(np.full((n_states, n_actions), 1.0 / n_actions), 0)


class ScheduleForm(Enum):
    EXP_DECAY = 'exp_decay'
    CONSTANT = 'constant'


@dataclass(frozen=True)
class TemperatureSchedule:
    """beta(k) = exp(-value k) for ExpDecay, beta(k) = value for Constant."""

    form: ScheduleForm = ScheduleForm.EXP_DECAY
    value: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, 'form', ScheduleForm(self.form))
        if not self.value > 0:
            raise ValidationError("temperature schedule parameter must be positive",
                                  operation='TemperatureSchedule')

    def beta(self, k: int) -> float:
        if self.form is ScheduleForm.EXP_DECAY:
            return math.exp(-self.value * k)
        return self.value


def _indicator(learned: Union[SoftmaxParams, DeterministicPolicy, np.ndarray], shape) -> np.ndarray:
    if isinstance(learned, DeterministicPolicy):
        actions = learned.action
    elif isinstance(learned, SoftmaxParams):
        actions = greedy_actions(learned.policy())
    else:
        actions = greedy_actions(np.asarray(learned, dtype=float))
    indicator = np.zeros(shape)
    indicator[np.arange(shape[0]), actions] = 1.0
    return indicator


def habit_update(habit: HabitTable, learned: Union[SoftmaxParams, DeterministicPolicy, np.ndarray],
                 ewma_weight: Optional[float] = None) -> HabitTable:
    """
    Fold one solved task into the habit table.

    The indicator marks the greedy action of the learned policy (ties to the
    lowest index). The default update is the running mean
    xi <- (k-1)/k xi + 1/k indicator with k the new count; with ewma_weight w
    it is xi <- (1-w) xi + w indicator after the first task.
    """
    indicator = _indicator(learned, habit.xi.shape)
    k = habit.k + 1
    if habit.k == 0:
        xi = indicator
    elif ewma_weight is not None:
        if not 0.0 < ewma_weight <= 1.0:
            raise ValidationError("ewma_weight must lie in (0, 1]", operation='habit_update')
        xi = (1.0 - ewma_weight) * habit.xi + ewma_weight * indicator
    else:
        xi = (k - 1) / k * habit.xi + indicator / k
    return HabitTable(xi, k)


def default_from_habit(habit: HabitTable, beta: float) -> DefaultPolicy:
    """pi_0(a|s) proportional to exp(xi(s, a) / beta)."""
    if not beta > 0:
        raise ValidationError("beta must be positive", operation='default_from_habit')
    return DefaultPolicy.fixed(softmax(habit.xi / beta, axis=1))


@dataclass(frozen=True)
class TaskRecord:
    task_index: int
    run: RunResult
    final_avg_reward: float
    alpha_profile_vs_task_optimal: AlphaProfile
    optimal_value_rho: float


@dataclass(frozen=True)
class MultitaskResult:
    per_task: Tuple[TaskRecord, ...]
    habit_snapshots: Tuple[HabitTable, ...]
    default_snapshots: Tuple[np.ndarray, ...]
    final_default: Optional[DefaultPolicy] = None

    def __post_init__(self):
        if not len(self.per_task) == len(self.habit_snapshots) == len(self.default_snapshots):
            raise ValidationError("per-task records and snapshots must have equal lengths",
                                  operation='MultitaskResult')


def final_average_reward(run: RunResult, window: int = 100) -> float:
    """Mean episode reward over the last window history records (value at rho in exact mode)."""
    if not run.history:
        return float('nan')
    tail = run.history[-window:]
    rewards = [record.episode_reward for record in tail]
    if all(math.isnan(reward) for reward in rewards):
        return float(tail[-1].value_rho)
    return float(np.nanmean(rewards))


def _initial_default(spec: RegularizerSpec, n_states: int, n_actions: int,
                     default: Optional[DefaultPolicy]) -> DefaultPolicy:
    if spec.kind.is_learned:
        if default is not None and default.kind is DefaultKind.PARAMETRIC:
            return default
        return DefaultPolicy.parametric(SoftmaxParams.uniform(n_states, n_actions))
    if default is not None:
        return default
    return DefaultPolicy.uniform(n_states, n_actions)


def run_task_sequence(family: TaskFamily, n_tasks: int, spec: RegularizerSpec, optim_config: OptimConfig,
                      schedule: Optional[TemperatureSchedule] = None, seed: int = 0, master_seed: int = 0,
                      default: Optional[DefaultPolicy] = None, init_from_default: bool = False,
                      ewma_weight: Optional[float] = None, final_window: int = 100) -> MultitaskResult:
    """
    Solve n_tasks tasks in sequence with one regularizer.

    Habit defaults are rebuilt from the habit table after every task; learned
    defaults carry their distilled parameters into the next task; all other
    kinds keep the initial default (uniform unless given). Each task starts
    from a fresh uniform theta, or from log pi_0 with init_from_default.

    Returns:
        MultitaskResult with one record and one snapshot pair per task
    """
    if n_tasks < 0:
        raise ValidationError("n_tasks must be non-negative", operation='run_task_sequence')
    schedule = schedule or TemperatureSchedule()
    current = _initial_default(spec, family.n_states, family.n_actions, default)
    habit = HabitTable.initial(family.n_states, family.n_actions)
    records, habits, snapshots = [], [], []
    for task_index in range(n_tasks):
        mdp = family.sample(stream(seed, task_index, Purpose.TASK, master_seed))
        if init_from_default:
            init = SoftmaxParams.from_policy(current.probs())
        else:
            init = SoftmaxParams.uniform(family.n_states, family.n_actions)
        used_default = current.probs()
        if optim_config.mode is Mode.SAMPLED:
            run = run_sampled(mdp, spec, current, optim_config, init,
                              rng=stream(seed, task_index, Purpose.TRAJECTORY, master_seed))
        else:
            run = run_exact(mdp, spec, current, optim_config, init)
        pi_star, star_eval = solve_optimal(mdp)
        habit = habit_update(habit, run.final_params, ewma_weight)
        if spec.kind is RegularizerKind.HABIT_DEFAULT:
            current = default_from_habit(habit, schedule.beta(habit.k))
        elif spec.kind.is_learned:
            current = run.final_default
        record = TaskRecord(task_index=task_index, run=run,
                            final_avg_reward=final_average_reward(run, final_window),
                            alpha_profile_vs_task_optimal=alpha_profile(pi_star, used_default),
                            optimal_value_rho=float(mdp.rho @ star_eval.v))
        records.append(record)
        habits.append(habit)
        snapshots.append(np.array(current.probs(), copy=True))
        logger.debug(f"[{spec.kind.value}] seed {seed} task {task_index}: "
                     f"final reward {record.final_avg_reward:.3f}, {run.env_steps} env steps")
    return MultitaskResult(per_task=tuple(records), habit_snapshots=tuple(habits),
                           default_snapshots=tuple(snapshots), final_default=current)


def tvpo_run(family: TaskFamily, n_tasks: int, spec: RegularizerSpec, optim_config: OptimConfig,
             schedule: Optional[TemperatureSchedule] = None, seed: int = 0, master_seed: int = 0,
             init_from_default: bool = False, ewma_weight: Optional[float] = None,
             final_window: int = 100) -> MultitaskResult:
    """TV policy optimization: regularize every task toward the tempered habit default."""
    if spec.kind is not RegularizerKind.HABIT_DEFAULT:
        raise ValidationError(f"tvpo_run needs a habit regularizer, got {spec.kind.value}",
                              operation='tvpo_run')
    return run_task_sequence(family, n_tasks, spec, optim_config, schedule, seed=seed,
                             master_seed=master_seed, init_from_default=init_from_default,
                             ewma_weight=ewma_weight, final_window=final_window)


@dataclass(frozen=True)
class Barycenter:
    default: DefaultPolicy
    habit: HabitTable


@dataclass(frozen=True)
class BruteForceBarycenter:
    default: DefaultPolicy
    expected_tv: np.ndarray


def _habit_of(weights: Sequence[float], det_policies: Sequence[DeterministicPolicy]) -> np.ndarray:
    weights = np.asarray(weights, dtype=float)
    if len(det_policies) == 0 or len(weights) != len(det_policies):
        raise ShapeError("need one weight per policy and at least one policy", operation='barycenter')
    if np.any(weights < 0) or abs(float(weights.sum()) - 1.0) > HABIT_TOL:
        raise ValidationError("weights must be a probability vector", operation='barycenter')
    n_states, n_actions = len(det_policies[0].action), det_policies[0].n_actions
    xi = np.zeros((n_states, n_actions))
    for weight, policy in zip(weights, det_policies):
        if policy.as_table().shape != xi.shape:
            raise ShapeError("policies must share state and action counts", operation='barycenter')
        xi[np.arange(n_states), policy.action] += weight
    return xi


def tv_barycenter(weights: Sequence[float], det_policies: Sequence[DeterministicPolicy]) -> Barycenter:
    """Greedy policy over xi(s, a) = sum_k w_k 1(pi_k(s) = a), ties to the lowest index."""
    xi = _habit_of(weights, det_policies)
    greedy = DeterministicPolicy(greedy_actions(xi, BARYCENTER_TIE_TOL), xi.shape[1])
    return Barycenter(default=DefaultPolicy.fixed(greedy.as_table()),
                      habit=HabitTable(np.clip(xi, 0.0, 1.0), len(det_policies)))


def kl_barycenter(weights: Sequence[float], det_policies: Sequence[DeterministicPolicy]) -> DefaultPolicy:
    """KL barycenter of deterministic policies; in either direction it is the TV barycenter."""
    return tv_barycenter(weights, det_policies).default


def expected_tv(xi: np.ndarray, table: np.ndarray) -> np.ndarray:
    """Per-state E_k d_TV(delta_{a_k(s)}, pi(.|s)) = 1 - sum_a xi(s, a) pi(a|s)."""
    return 1.0 - np.sum(xi * table, axis=1)


def simplex_grid(n_actions: int, resolution: int) -> np.ndarray:
    """All points of the probability simplex with coordinates in multiples of 1/resolution."""
    if resolution < 1:
        raise ValidationError("grid resolution must be at least 1", operation='simplex_grid')
    points = []
    for bars in itertools.combinations(range(resolution + n_actions - 1), n_actions - 1):
        edges = (-1,) + bars + (resolution + n_actions - 1,)
        points.append([edges[i + 1] - edges[i] - 1 for i in range(n_actions)])
    return np.array(points, dtype=float) / resolution


def brute_force_barycenter(weights: Sequence[float], det_policies: Sequence[DeterministicPolicy],
                           candidate_grid_resolution: int = 10) -> BruteForceBarycenter:
    """
    Per-state exhaustive minimization of the expected TV distance.

    Candidates are the deterministic policies in action order followed by
    the simplex lattice; a later candidate replaces the incumbent only when
    it is better by more than 1e-12.
    """
    xi = _habit_of(weights, det_policies)
    n_states, n_actions = xi.shape
    candidates = np.vstack([np.eye(n_actions), simplex_grid(n_actions, candidate_grid_resolution)])
    table = np.zeros_like(xi)
    achieved = np.zeros(n_states)
    for s in range(n_states):
        costs = 1.0 - candidates @ xi[s]
        best = 0
        for index in range(1, len(candidates)):
            if costs[index] < costs[best] - BARYCENTER_TIE_TOL:
                best = index
        table[s] = candidates[best]
        achieved[s] = costs[best]
    return BruteForceBarycenter(default=DefaultPolicy.fixed(table), expected_tv=achieved)


@dataclass(frozen=True)
class ConcentrationRow:
    k: int
    mean_gap: float
    std_gap: float
    envelope: float
    within_envelope: float


@dataclass(frozen=True)
class ConcentrationReport:
    """
    Barycenter-gap statistics per sample size K.

    Attributes:
        zeta: Corruption level of the per-task policies
        rows: One summary row per K
        gaps: Per-repeat gaps keyed by K
        fit_coefficient: c in the least-squares fit mean_gap ~ c / sqrt(K)
        spearman_rho: Rank correlation between K and mean_gap
    """

    zeta: float
    rows: Tuple[ConcentrationRow, ...]
    gaps: Dict[int, np.ndarray] = field(default_factory=dict)
    fit_coefficient: float = float('nan')
    spearman_rho: float = float('nan')


def concentration_envelope(zeta: float, k: int, n_actions: int, delta: float = 0.05, c: float = 1.0) -> float:
    """2 zeta + sqrt(2 log(2/delta) / K) + c sqrt(|A| / K)."""
    return 2 * zeta + math.sqrt(2 * math.log(2 / delta) / k) + c * math.sqrt(n_actions / k)


class _OptimalPolicyCache:
    """solve_optimal memoized on the task tensors; tree families repeat tasks often."""

    def __init__(self):
        self._policies: Dict[Tuple[bytes, bytes, float], DeterministicPolicy] = {}

    def __call__(self, mdp: Mdp) -> DeterministicPolicy:
        key = (mdp.transition.tobytes(), mdp.reward.tobytes(), mdp.gamma)
        if key not in self._policies:
            self._policies[key] = solve_optimal(mdp)[0]
        return self._policies[key]


def concentration_experiment(family: TaskFamily, k_values: Sequence[int], policy_error_zeta: float,
                             n_repeats: int, rng: np.random.Generator, k_ref: int = 2000,
                             delta: float = 0.05, envelope_c: float = 1.0,
                             corruption_rng: Optional[np.random.Generator] = None) -> ConcentrationReport:
    """
    How close the estimated barycenter gets to the population barycenter.

    A reference sample of k_ref tasks fixes the population habit xi and its
    greedy barycenter pi_0. Each repeat samples K tasks (reusing the
    reference sample when K >= k_ref), mixes every optimal policy with the
    uniform policy to TV distance zeta, draws one action per state from each
    mixture as the learned policy, averages the indicators of those actions
    into xi_hat and takes the greedy pi_0_hat. The gap is
    max_s |E d_TV(pi*, pi_0_hat) - E d_TV(pi*, pi_0)| with expectations over
    the reference sample.

    Args:
        corruption_rng: Stream for the action draws; defaults to rng

    Raises:
        ValidationError: If zeta exceeds 1 - 1/|A|
    """
    corruption_rng = rng if corruption_rng is None else corruption_rng
    if not 0.0 <= policy_error_zeta <= max_corruption(family.n_actions):
        raise ValidationError(f"policy_error_zeta must lie in [0, {max_corruption(family.n_actions):g}]",
                              operation='concentration_experiment')
    zeta = policy_error_zeta
    solve = _OptimalPolicyCache()
    n_actions = family.n_actions
    reference = [solve(family.sample(rng)) for _ in range(k_ref)]
    xi_ref = _habit_of(np.full(k_ref, 1.0 / k_ref), reference)
    population = DeterministicPolicy(greedy_actions(xi_ref, BARYCENTER_TIE_TOL), n_actions).as_table()
    population_tv = expected_tv(xi_ref, population)

    rows, gaps = [], {}
    for k in k_values:
        repeat_gaps = np.zeros(n_repeats)
        for repeat in range(n_repeats):
            if k >= k_ref:
                policies = reference
            else:
                policies = [solve(family.sample(rng)) for _ in range(k)]
            learned = [DeterministicPolicy(sample_actions(corruption_rng, corrupt_deterministic(policy, zeta)),
                                           n_actions)
                       for policy in policies]
            xi_hat = _habit_of(np.full(len(learned), 1.0 / len(learned)), learned)
            estimate = DeterministicPolicy(greedy_actions(xi_hat, BARYCENTER_TIE_TOL), n_actions).as_table()
            repeat_gaps[repeat] = float(np.max(np.abs(expected_tv(xi_ref, estimate) - population_tv)))
        envelope = concentration_envelope(policy_error_zeta, k, n_actions, delta, envelope_c)
        gaps[k] = repeat_gaps
        rows.append(ConcentrationRow(k=k, mean_gap=float(repeat_gaps.mean()), std_gap=float(repeat_gaps.std()),
                                     envelope=envelope,
                                     within_envelope=float(np.mean(repeat_gaps <= envelope))))
        logger.info(f"zeta={policy_error_zeta} K={k}: mean gap {rows[-1].mean_gap:.4f} "
                    f"(envelope {envelope:.4f})")

    fit, rho = float('nan'), float('nan')
    if rows:
        inv_sqrt = np.array([[1.0 / math.sqrt(row.k)] for row in rows])
        means = np.array([row.mean_gap for row in rows])
        fit = float(np.linalg.lstsq(inv_sqrt, means, rcond=None)[0][0])
    if len(rows) >= 2:
        rho = float(spearmanr([row.k for row in rows], [row.mean_gap for row in rows])[0])
    return ConcentrationReport(zeta=policy_error_zeta, rows=tuple(rows), gaps=gaps,
                               fit_coefficient=fit, spearman_rho=rho)
