"""
TVPO against learned default policies.

Runs TVPO, Distral, forward-KL and reverse-KL distillation over the tree
family (p = 0.7 unless configured) and writes the per-task default-policy
snapshots plus the final defaults at s1 and s7.
"""

from typing import Dict, List

import numpy as np

from framework.base_experiment import CheckResult
from mtrpo.regularizers import RegularizerKind, RegularizerSpec
from mtrpo.tree_env import N_ACTIONS, STATE_INDEX, STATE_NAMES

from .multitask_common import Arm, ArmOutcome, MultitaskExperiment

SNAPSHOT_STATES = ('s1', 's7')
ACTION_COLUMNS = tuple(f'p_a{action}' for action in range(N_ACTIONS))
NEAR_UNIFORM_MAX_PROB = 0.75


class LearnedBaselinesExperiment(MultitaskExperiment):
    """
    TVPO vs Distral, forward-KL and reverse-KL learned defaults.

    Besides curves and summary, writes learned_baselines_defaults.csv (one
    row per seed, method, task and state) and
    learned_baselines_final_defaults.csv (s1 and s7 after the last task).
    """

    name = 'learned-baselines'
    description = 'TVPO vs learned default policies (Distral, forward KL, reverse KL)'
    file_prefix = 'learned_baselines'

    def arms(self) -> List[Arm]:
        lam = self.config.lam
        return [
            Arm('tvpo', RegularizerSpec(RegularizerKind.HABIT_DEFAULT, lam)),
            Arm('distral', RegularizerSpec(RegularizerKind.DISTRAL, lam)),
            Arm('forward_kl', RegularizerSpec(RegularizerKind.FORWARD_KL_LEARNED, lam)),
            Arm('reverse_kl', RegularizerSpec(RegularizerKind.REVERSE_KL_LEARNED, lam)),
        ]

    def run_experiment(self) -> List[CheckResult]:
        self.logger.info("Starting learned-baseline comparison...")
        outcomes = self.run_arms()

        self.write_csv(f'{self.file_prefix}_defaults.csv', ('seed', 'method', 'task', 'state') + ACTION_COLUMNS,
                       self._snapshot_rows(outcomes))
        self.write_csv(f'{self.file_prefix}_final_defaults.csv', ('seed', 'method', 'state') + ACTION_COLUMNS,
                       self._final_default_rows(outcomes))

        self.check_dominance(outcomes)
        self._check_s7_near_uniform(outcomes)
        self._check_s1_determinism(outcomes)

        self.logger.info(f"Learned-baseline comparison completed: {len(self.results)} checks performed")
        return self.results

    def _snapshot_rows(self, outcomes: Dict[str, List[ArmOutcome]]):
        for outcome in self._in_cell_order(outcomes):
            for task, table in enumerate(outcome.default_snapshots):
                for state, name in enumerate(STATE_NAMES):
                    yield (outcome.seed, outcome.method, task, name) + tuple(table[state])

    def _final_default_rows(self, outcomes: Dict[str, List[ArmOutcome]]):
        for outcome in self._in_cell_order(outcomes):
            if not outcome.default_snapshots:
                continue
            for name in SNAPSHOT_STATES:
                yield (outcome.seed, outcome.method, name) + tuple(outcome.default_snapshots[-1][STATE_INDEX[name]])

    @staticmethod
    def _in_cell_order(outcomes: Dict[str, List[ArmOutcome]]) -> List[ArmOutcome]:
        order = {method: position for position, method in enumerate(outcomes)}
        flat = [outcome for arm_outcomes in outcomes.values() for outcome in arm_outcomes]
        return sorted(flat, key=lambda o: (o.seed, order[o.method]))

    @staticmethod
    def _mean_max_prob(arm_outcomes: List[ArmOutcome], state: str) -> float:
        rows = np.array([o.default_snapshots[-1][STATE_INDEX[state]] for o in arm_outcomes if o.default_snapshots])
        return float(np.mean(np.max(rows, axis=1))) if rows.size else float('nan')

    def _check_s7_near_uniform(self, outcomes: Dict[str, List[ArmOutcome]]):
        """Both subtrees below s7 pay off on average, so no method should commit there."""
        for method, arm_outcomes in outcomes.items():
            if not arm_outcomes:
                continue
            max_prob = self._mean_max_prob(arm_outcomes, 's7')
            self.add_result(f'{method}_s7_near_uniform', max_prob <= NEAR_UNIFORM_MAX_PROB,
                            f"mean max-prob at s7 {max_prob:.3f} (limit {NEAR_UNIFORM_MAX_PROB})")

    def _check_s1_determinism(self, outcomes: Dict[str, List[ArmOutcome]]):
        if not outcomes.get('tvpo'):
            return
        tvpo = self._mean_max_prob(outcomes['tvpo'], 's1')
        for method in ('distral', 'forward_kl', 'reverse_kl'):
            if not outcomes.get(method):
                continue
            other = self._mean_max_prob(outcomes[method], 's1')
            self.add_result(f'tvpo_s1_more_deterministic_than_{method}', tvpo >= other,
                            f"mean max-prob at s1 {tvpo:.3f} vs {other:.3f}")
