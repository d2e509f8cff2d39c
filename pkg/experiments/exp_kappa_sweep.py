"""
Amplification coefficient sweep.

Tabulates kappa(alpha, |A|) over an alpha grid for several action counts.
The grid always contains the two landmarks of each action count: alpha =
1 - 1/|A| (the uniform default, kappa = 2) and alpha = 1 - 1/(2|A|), where
the coefficient becomes infinite.
"""

import math
from typing import List

import numpy as np

from framework.base_experiment import BaseExperiment, CheckResult
from mtrpo.bounds import kappa

HEADER = ('n_actions', 'alpha', 'kappa', 'kappa_over_2')


def alpha_grid(alphas, n_actions: int) -> List[float]:
    """Sorted grid with both landmarks of n_actions added."""
    landmarks = (1.0 - 1.0 / n_actions, 1.0 - 1.0 / (2 * n_actions))
    return sorted(set(float(a) for a in alphas) | set(landmarks))


class KappaSweepExperiment(BaseExperiment):
    name = 'kappa-sweep'
    description = 'Tabulate kappa(alpha, |A|) and check its landmarks'

    def run_experiment(self) -> List[CheckResult]:
        self.logger.info(f"Starting kappa sweep for |A| in {list(self.config.action_counts)}")
        table = {n: [(alpha, kappa(alpha, n)) for alpha in alpha_grid(self.config.alphas, n)]
                 for n in self.config.action_counts}

        self.write_csv('kappa_sweep.csv', HEADER,
                       ((n, alpha, value, value / 2) for n, rows in table.items() for alpha, value in rows))

        self._check_uniform_landmark()
        self._check_finiteness(table)
        self._check_monotone(table)

        self.logger.info(f"Kappa sweep completed: {len(self.results)} checks performed")
        return self.results

    def _check_uniform_landmark(self):
        wrong = {n: kappa(1.0 - 1.0 / n, n) for n in self.config.action_counts if kappa(1.0 - 1.0 / n, n) != 2.0}
        self.add_result('kappa_at_uniform_is_2', not wrong,
                        "kappa(1 - 1/|A|, |A|) = 2 for every action count" if not wrong
                        else f"kappa differs from 2 for {sorted(wrong)}", {'values': wrong})

    def _check_finiteness(self, table):
        mismatches = [(n, alpha) for n, rows in table.items() for alpha, value in rows
                      if math.isfinite(value) != (alpha < 1.0 - 1.0 / (2 * n))]
        self.add_result('kappa_finite_below_threshold', not mismatches,
                        "kappa finite exactly when alpha < 1 - 1/(2|A|)" if not mismatches
                        else f"{len(mismatches)} grid points break the finiteness rule",
                        {'mismatches': mismatches[:10]})

    def _check_monotone(self, table):
        broken = []
        for n, rows in table.items():
            finite = np.array([value for alpha, value in rows if math.isfinite(value)])
            if np.any(np.diff(finite) <= 0):
                broken.append(n)
        self.add_result('kappa_increasing_in_alpha', not broken,
                        "kappa strictly increasing on the finite part of every grid" if not broken
                        else f"not increasing for |A| in {broken}")
