"""
Delayed distillation sweep.

Reverse-KL learned defaults start distilling only after a delay measured in
environment steps within each task. A log-barrier arm (fixed uniform
default) is run alongside as the reference for a default that never moves.
"""

import math
from typing import Dict, List

import numpy as np

from framework.base_experiment import CheckResult
from mtrpo.regularizers import RegularizerKind, RegularizerSpec

from .multitask_common import Arm, ArmOutcome, MultitaskExperiment, mean_and_std, seed_means

REFERENCE_ARM = 'log_barrier'
# absolute slack added to the two-standard-error band of the full-delay comparison
NOISE_SLACK = 0.05


def delay_arm_name(delay: float) -> str:
    return f'reverse_kl@{delay:g}'


class DelaySweepExperiment(MultitaskExperiment):
    """Reverse-KL distillation started progressively later within each task."""

    name = 'delay-sweep'
    description = 'Reverse-KL learned default with delayed distillation'
    file_prefix = 'delay_sweep'

    def arms(self) -> List[Arm]:
        arms = [Arm(delay_arm_name(delay),
                    RegularizerSpec(RegularizerKind.REVERSE_KL_LEARNED, self.config.lam, distill_delay=delay))
                for delay in self.config.delay_steps()]
        arms.append(Arm(REFERENCE_ARM, RegularizerSpec(RegularizerKind.LOG_BARRIER, self.config.lam)))
        return arms

    def run_experiment(self) -> List[CheckResult]:
        delays = self.config.delay_steps()
        self.logger.info(f"Starting delay sweep over {len(delays)} delays: {', '.join(f'{d:g}' for d in delays)}")
        outcomes = self.run_arms()

        self.write_csv('delay_sweep.csv', ('delay', 'mean_final_reward', 'std'),
                       ((delay,) + mean_and_std(seed_means(outcomes[delay_arm_name(delay)]))
                        for delay in delays))

        self._check_mid_delay(outcomes, delays)
        self._check_full_delay(outcomes, delays)

        self.logger.info(f"Delay sweep completed: {len(self.results)} checks performed")
        return self.results

    def _check_mid_delay(self, outcomes: Dict[str, List[ArmOutcome]], delays: List[float]):
        """The delay nearest half the budget does at least as well as distilling from the start."""
        if 0.0 not in delays or len(delays) < 2:
            self.logger.info("Skipping mid-delay check: the sweep needs delay 0 and one other delay")
            return
        half = 0.5 * self.config.env_steps_per_task
        middle = min((d for d in delays if d != 0.0), key=lambda d: (abs(d - half), d))
        baseline = float(np.mean(seed_means(outcomes[delay_arm_name(0.0)])))
        delayed = float(np.mean(seed_means(outcomes[delay_arm_name(middle)])))
        self.add_result('mid_delay_helps', delayed >= baseline,
                        f"delay {middle:g}: {delayed:.4f} vs delay 0: {baseline:.4f}",
                        {'delay': middle, 'delayed': delayed, 'immediate': baseline})

    def _check_full_delay(self, outcomes: Dict[str, List[ArmOutcome]], delays: List[float]):
        """A default that never distills behaves like a fixed uniform default, within noise."""
        budget = self.config.env_steps_per_task
        full = [d for d in delays if d >= budget]
        if not full or not outcomes[REFERENCE_ARM]:
            return
        delayed = seed_means(outcomes[delay_arm_name(full[0])])
        reference = seed_means(outcomes[REFERENCE_ARM])
        if delayed.size == 0:
            return
        band = 2.0 * math.sqrt(np.var(delayed) / delayed.size + np.var(reference) / reference.size) + NOISE_SLACK
        difference = float(np.mean(delayed) - np.mean(reference))
        self.add_result('full_delay_matches_fixed_default', abs(difference) <= band,
                        f"difference to {REFERENCE_ARM} {difference:+.4f} (band {band:.4f})",
                        {'difference': difference, 'band': band})
