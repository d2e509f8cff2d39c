"""
Error-bound verification over a suite of random MDPs.

Every suite MDP is solved to an approximate stationary point of the
fixed-default objective for three defaults (the optimal policy, the uniform
policy and a corrupted optimal policy). The measured value gap is compared
with the kappa bound and the tight bound.
"""

from dataclasses import dataclass
from typing import List

from framework.base_experiment import BaseExperiment, CheckResult
from mtrpo.bounds import VerificationRecord, verify_suite_mdp

EXTRA_FIELDS = ('converged', 'updates', 'grad_inf_norm')


@dataclass(frozen=True)
class SuiteCell:
    mdp_id: int
    gamma: float
    lam: float
    master_seed: int


def verify_cell(cell: SuiteCell) -> List[VerificationRecord]:
    return verify_suite_mdp(cell.mdp_id, cell.gamma, cell.lam, cell.master_seed)


class BoundVerificationExperiment(BaseExperiment):
    name = 'verify-bounds'
    description = 'Check the kappa and tight error bounds on random MDPs'

    def run_experiment(self) -> List[CheckResult]:
        config = self.config
        self.logger.info(f"Starting bound verification on {config.n_mdps} MDPs "
                         f"(gamma={config.verify_gamma}, lambda={config.lam})")
        cells = [SuiteCell(mdp_id, config.verify_gamma, config.lam, config.master_seed)
                 for mdp_id in range(config.n_mdps)]
        records: List[VerificationRecord] = []

        def rows():
            for outcome in self.pool.map(verify_cell, cells):
                if not outcome.ok:
                    self.record_cell_failure(outcome, f"mdp{cells[outcome.index].mdp_id}")
                    continue
                for record in outcome.value:
                    records.append(record)
                    row = record.to_row()
                    yield tuple(row[name] for name in VerificationRecord.CSV_FIELDS + EXTRA_FIELDS)

        self.write_csv('bound_verification.csv', VerificationRecord.CSV_FIELDS + EXTRA_FIELDS, rows())

        if records:
            self._check_bounds(records)
        self.logger.info(f"Bound verification completed: {len(records)} runs, {len(self.results)} checks")
        return self.results

    def _check_bounds(self, records: List[VerificationRecord]):
        converged = [r for r in records if r.converged]
        self.add_result('stopping_condition_met', len(converged) == len(records),
                        f"{len(converged)}/{len(records)} runs reached |grad| <= lambda/(2|S||A|)")
        for field, label in (('holds_kappa', 'kappa'), ('holds_tight', 'tight')):
            violations = [(r.mdp_id, r.pi0_kind) for r in converged if not getattr(r, field)]
            self.add_result(f'{label}_bound_holds', not violations,
                            f"{len(converged) - len(violations)}/{len(converged)} converged runs within the "
                            f"{label} bound", {'violations': violations})
