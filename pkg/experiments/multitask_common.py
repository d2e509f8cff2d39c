"""
Shared machinery for the multitask experiments on the tree family.

Each experiment is a set of arms (a method name plus a regularizer) run for
every seed. A (seed, arm) cell solves n_tasks tree tasks in sequence; its
learning curve is streamed to CSV in cell order and the per-task final
rewards feed the summary table and the directional checks.
"""

import math
from abc import abstractmethod
from collections import deque
from dataclasses import dataclass, replace
from typing import Dict, List, Sequence, Tuple

import numpy as np

from framework.base_experiment import BaseExperiment, CheckResult
from framework.config_manager import ExperimentConfig
from mtrpo.multitask import (MultitaskResult, ScheduleForm, TaskFamily, TemperatureSchedule,
                             run_task_sequence)
from mtrpo.optimizer import Mode, OptimConfig
from mtrpo.regularizers import RegularizerSpec
from mtrpo.tree_env import SHARED_ACTIONS, STATE_INDEX, TreeFamilyConfig, tree_family

CURVE_HEADER = ('seed', 'method', 'task', 'update_index', 'env_steps', 'episode_reward', 'reward_moving_avg',
                'value_rho', 'value_mu', 'objective')
SUMMARY_HEADER = ('method', 'mean_final_reward', 'std', 'mean_final_reward_late', 'std_late')

# tasks counted as "late" in the summary (tasks 3 onwards)
LATE_TASK_START = 2


@dataclass(frozen=True)
class Arm:
    name: str
    spec: RegularizerSpec


@dataclass(frozen=True)
class ArmCell:
    seed: int
    arm: Arm
    config: ExperimentConfig


@dataclass(frozen=True)
class ArmOutcome:
    """
    What one (seed, arm) cell reports back.

    Attributes:
        seed: Run seed
        method: Arm name
        curve: Learning-curve rows in CURVE_HEADER order (emptied once written)
        final_rewards: Final average reward per task
        default_snapshots: Default-policy table after each task
        history_lengths: Curve rows per task
        updates: Updates per task
        max_penalty: Largest |value_mu - objective| over the curve
    """

    seed: int
    method: str
    curve: Tuple[tuple, ...]
    final_rewards: Tuple[float, ...]
    default_snapshots: Tuple[np.ndarray, ...]
    history_lengths: Tuple[int, ...]
    updates: Tuple[int, ...]
    max_penalty: float


def optim_config_for(config: ExperimentConfig) -> OptimConfig:
    """Sampled-gradient optimizer settings for one task of a multitask run."""
    return OptimConfig(eta=config.eta, max_env_steps=config.env_steps_per_task, batch_size=config.batch_size,
                       horizon_cutoff=config.horizon_cutoff, mode=Mode.SAMPLED, eta_reg=config.eta_reg,
                       history_stride=config.curve_stride)


def family_for(config: ExperimentConfig) -> TaskFamily:
    return tree_family(TreeFamilyConfig(p_geometric=config.tree_p, gamma=config.gamma))


def curve_rows(seed: int, method: str, result: MultitaskResult, window: int) -> List[tuple]:
    """Curve rows with a moving average of the last window episode rewards, reset per task."""
    rows = []
    for record in result.per_task:
        recent = deque(maxlen=window)
        for entry in record.run.history:
            if not math.isnan(entry.episode_reward):
                recent.append(entry.episode_reward)
            moving = float(np.mean(recent)) if recent else float('nan')
            rows.append((seed, method, record.task_index, entry.update_index, entry.env_steps,
                         entry.episode_reward, moving, entry.value_rho, entry.value_mu, entry.objective))
    return rows


def run_arm_cell(cell: ArmCell) -> ArmOutcome:
    """Run one seed of one arm; executed in a worker process."""
    config = cell.config
    schedule = TemperatureSchedule(ScheduleForm.EXP_DECAY, config.temperature_rate)
    result = run_task_sequence(family_for(config), config.n_tasks, cell.arm.spec, optim_config_for(config),
                               schedule, seed=cell.seed, master_seed=config.master_seed,
                               init_from_default=config.init_from_default, ewma_weight=config.ewma_weight,
                               final_window=config.final_window)
    penalties = [abs(entry.value_mu - entry.objective) for record in result.per_task
                 for entry in record.run.history]
    return ArmOutcome(
        seed=cell.seed,
        method=cell.arm.name,
        curve=tuple(curve_rows(cell.seed, cell.arm.name, result, config.final_window)),
        final_rewards=tuple(record.final_avg_reward for record in result.per_task),
        default_snapshots=result.default_snapshots,
        history_lengths=tuple(len(record.run.history) for record in result.per_task),
        updates=tuple(record.run.updates for record in result.per_task),
        max_penalty=max(penalties, default=0.0),
    )


def seed_means(outcomes: Sequence[ArmOutcome], first_task: int = 0) -> np.ndarray:
    """Per-seed mean final reward over tasks first_task.. (all tasks if none remain)."""
    means = []
    for outcome in outcomes:
        rewards = outcome.final_rewards[first_task:] or outcome.final_rewards
        means.append(float(np.mean(rewards)) if rewards else float('nan'))
    return np.array(means)


def mean_and_std(values: np.ndarray) -> Tuple[float, float]:
    if values.size == 0:
        return float('nan'), float('nan')
    return float(np.mean(values)), float(np.std(values))


def habit_mass_target(beta: float, n_actions: int) -> float:
    """Mass a tempered softmax puts on the action with habit 1 when the others have habit 0."""
    return 1.0 / (1.0 + (n_actions - 1) * math.exp(-1.0 / beta))


class MultitaskExperiment(BaseExperiment):
    """
    Base class for experiments made of multitask arms on the tree family.

    Subclasses list their arms and file prefix, then add experiment-specific
    files and checks on top of run_arms().
    """

    file_prefix = ''

    @abstractmethod
    def arms(self) -> List[Arm]:
        """Arms run for every seed, in output order."""

    def run_arms(self) -> Dict[str, List[ArmOutcome]]:
        """
        Run every (seed, arm) cell, stream the curve CSV and write the summary CSV.

        Returns:
            Outcomes per arm name, in seed order, without curve rows
        """
        arms = self.arms()
        cells = [ArmCell(seed, arm, self.config) for seed in range(self.config.n_seeds) for arm in arms]
        outcomes: Dict[str, List[ArmOutcome]] = {arm.name: [] for arm in arms}
        self.logger.info(f"Running {len(cells)} cells ({self.config.n_seeds} seeds x {len(arms)} arms, "
                         f"{self.config.n_tasks} tasks, {self.config.env_steps_per_task} steps per task, "
                         f"p={self.config.tree_p})")

        def rows():
            for outcome in self.pool.map(run_arm_cell, cells):
                cell = cells[outcome.index]
                if not outcome.ok:
                    self.record_cell_failure(outcome, f"{cell.arm.name}_seed{cell.seed}")
                    continue
                yield from outcome.value.curve
                outcomes[cell.arm.name].append(replace(outcome.value, curve=()))

        count = self.write_csv(f'{self.file_prefix}_curves.csv', CURVE_HEADER, rows())
        self._check_row_count(count, outcomes)
        self.write_csv(f'{self.file_prefix}_summary.csv', SUMMARY_HEADER, self._summary_rows(arms, outcomes))
        return outcomes

    def _summary_rows(self, arms: List[Arm], outcomes: Dict[str, List[ArmOutcome]]):
        for arm in arms:
            mean, std = mean_and_std(seed_means(outcomes[arm.name]))
            late_mean, late_std = mean_and_std(seed_means(outcomes[arm.name], LATE_TASK_START))
            yield (arm.name, mean, std, late_mean, late_std)

    def _check_row_count(self, count: int, outcomes: Dict[str, List[ArmOutcome]]) -> CheckResult:
        expected = sum(sum(o.history_lengths) for arm_outcomes in outcomes.values() for o in arm_outcomes)
        updates = sum(sum(o.updates) for arm_outcomes in outcomes.values() for o in arm_outcomes)
        success = count == expected and (self.config.curve_stride > 1 or count == updates)
        return self.add_result('curve_row_count', success,
                               f"{count} curve rows for {updates} updates",
                               {'rows': count, 'expected_rows': expected, 'updates': updates})

    def check_dominance(self, outcomes: Dict[str, List[ArmOutcome]], reference: str = 'tvpo'):
        """One check per baseline: the reference arm's late-task mean is at least the baseline's."""
        if not outcomes.get(reference):
            self.add_result(f'{reference}_dominates', False, f"No completed {reference} cells")
            return
        reference_mean = float(np.mean(seed_means(outcomes[reference], LATE_TASK_START)))
        for name, arm_outcomes in outcomes.items():
            if name == reference or not arm_outcomes:
                continue
            baseline_mean = float(np.mean(seed_means(arm_outcomes, LATE_TASK_START)))
            self.add_result(f'{reference}_vs_{name}', reference_mean >= baseline_mean,
                            f"late-task mean final reward {reference_mean:.4f} vs {baseline_mean:.4f}",
                            {reference: reference_mean, name: baseline_mean})

    def check_shared_state_defaults(self, outcomes: Sequence[ArmOutcome], method: str, n_actions: int = 2):
        """Final defaults put the habit mass on the shared optimal action at s1, s3, s5 and s6."""
        if not outcomes:
            return
        beta = TemperatureSchedule(ScheduleForm.EXP_DECAY, self.config.temperature_rate).beta(self.config.n_tasks)
        target = habit_mass_target(beta, n_actions) - 0.05
        for state, action in SHARED_ACTIONS.items():
            rows = np.array([o.default_snapshots[-1][STATE_INDEX[state]] for o in outcomes])
            mass = float(np.mean(rows[:, action]))
            agreement = float(np.mean(np.argmax(rows, axis=1) == action))
            self.add_result(f'{method}_default_{state}', mass >= target and agreement == 1.0,
                            f"mass {mass:.3f} on a{action} (target {target:.3f}), "
                            f"greedy agreement {agreement:.2f}",
                            {'mass': mass, 'target': target, 'agreement': agreement})
