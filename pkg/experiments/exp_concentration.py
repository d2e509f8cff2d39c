"""
Barycenter concentration on the tree family.

For every corruption level zeta, estimates how far the barycenter built from
K sampled tasks lands from the population barycenter, over n_repeats
repeats per K.
"""

from dataclasses import dataclass
from typing import List

from framework.base_experiment import BaseExperiment, CheckResult
from framework.config_manager import ExperimentConfig
from mtrpo.multitask import ConcentrationReport, concentration_experiment
from mtrpo.rng import Purpose, stream

from .multitask_common import family_for

ROWS_HEADER = ('zeta', 'k', 'mean_gap', 'std_gap', 'envelope', 'within_envelope')
FIT_HEADER = ('zeta', 'fit_coefficient', 'spearman_rho')
ENVELOPE_COVERAGE = 0.95


@dataclass(frozen=True)
class ZetaCell:
    zeta: float
    config: ExperimentConfig


def concentration_cell(cell: ZetaCell) -> ConcentrationReport:
    """Every zeta draws from the same reference stream, so all levels share their task samples."""
    config = cell.config
    rng = stream(0, 0, Purpose.REFERENCE, config.master_seed)
    corruption_rng = stream(0, 0, Purpose.CORRUPTION, config.master_seed)
    return concentration_experiment(family_for(config), config.k_values, cell.zeta, config.n_repeats, rng,
                                    k_ref=config.k_ref, corruption_rng=corruption_rng)


class ConcentrationExperiment(BaseExperiment):
    name = 'concentration'
    description = 'Estimated vs population barycenter gap as the task sample grows'

    def run_experiment(self) -> List[CheckResult]:
        config = self.config
        self.logger.info(f"Starting concentration experiment: zetas {list(config.zetas)}, "
                         f"K {list(config.k_values)}, {config.n_repeats} repeats")
        cells = [ZetaCell(zeta, config) for zeta in config.zetas]
        reports: List[ConcentrationReport] = []
        for outcome in self.pool.map(concentration_cell, cells):
            if outcome.ok:
                reports.append(outcome.value)
            else:
                self.record_cell_failure(outcome, f"zeta{cells[outcome.index].zeta:g}")

        self.write_csv('concentration.csv', ROWS_HEADER,
                       ((report.zeta, row.k, row.mean_gap, row.std_gap, row.envelope, row.within_envelope)
                        for report in reports for row in report.rows))
        self.write_csv('concentration_fit.csv', FIT_HEADER,
                       ((report.zeta, report.fit_coefficient, report.spearman_rho) for report in reports))

        for report in reports:
            if report.zeta == 0.0:
                self._check_decreasing(report)
            else:
                self._check_envelope(report)

        self.logger.info(f"Concentration experiment completed: {len(self.results)} checks performed")
        return self.results

    def _check_decreasing(self, report: ConcentrationReport):
        if len(report.rows) < 2:
            return
        self.add_result('gap_decreases_in_k', report.spearman_rho < 0,
                        f"Spearman rho between K and mean gap: {report.spearman_rho:.3f}",
                        {'mean_gaps': [row.mean_gap for row in report.rows]})

    def _check_envelope(self, report: ConcentrationReport):
        short = [row.k for row in report.rows if row.within_envelope < ENVELOPE_COVERAGE]
        self.add_result(f'gap_within_envelope_zeta_{report.zeta:g}', not short,
                        f"gap below the envelope in at least {ENVELOPE_COVERAGE:.0%} of repeats for every K"
                        if not short else f"coverage below {ENVELOPE_COVERAGE:.0%} for K in {short}",
                        {'coverage': {row.k: row.within_envelope for row in report.rows}})
