import csv
import json
import logging
import os
from dataclasses import replace

import pytest

from experiments.exp_bound_verification import BoundVerificationExperiment
from experiments.exp_concentration import ConcentrationExperiment
from experiments.exp_delay_sweep import DelaySweepExperiment
from experiments.exp_fixed_baselines import FixedBaselinesExperiment
from experiments.exp_kappa_sweep import KappaSweepExperiment, alpha_grid
from experiments.exp_learned_baselines import LearnedBaselinesExperiment
from experiments.multitask_common import CURVE_HEADER, habit_mass_target
from framework.base_experiment import format_value
from framework.cell_pool import CellPool
from framework.experiment_runner import ExperimentRunner
from main import EXIT_CONFIG_ERROR, EXIT_IO_ERROR, EXIT_OK, ExperimentApplication

LOGGER = logging.getLogger('mtrpo.tests')


def read_rows(path):
    with open(path, encoding='utf-8', newline='') as f:
        return list(csv.reader(f))


def result_names(experiment):
    return {result.name: result.success for result in experiment.results}


def _fail(cell):
    raise RuntimeError(f"cell {cell} failed")


def _square(cell):
    return cell * cell


class TestFormatting:

    @pytest.mark.parametrize('value, text', [
        (None, ''), (True, 'true'), (False, 'false'), (3, '3'), (0.1, '0.1'), (1 / 3, repr(1 / 3)),
        (float('inf'), 'inf'), ('tvpo', 'tvpo'),
    ])
    def test_format_value(self, value, text):
        assert format_value(value) == text


class TestCellPool:

    def test_outcomes_keep_cell_order_and_capture_errors(self):
        outcomes = list(CellPool(1).map(_square, [1, 2, 3]))
        assert [o.value for o in outcomes] == [1, 4, 9]
        failed = list(CellPool(1).map(_fail, ['a']))
        assert not failed[0].ok
        assert failed[0].error.startswith('RuntimeError')

    @pytest.mark.slow
    def test_worker_processes_yield_in_order(self):
        outcomes = list(CellPool(2).map(_square, list(range(6))))
        assert [o.index for o in outcomes] == list(range(6))
        assert [o.value for o in outcomes] == [i * i for i in range(6)]


class TestKappaSweep:

    def test_grid_contains_landmarks(self):
        grid = alpha_grid([0.0, 1.0], 4)
        assert 0.75 in grid and 0.875 in grid
        assert grid == sorted(grid)

    def test_table_and_checks(self, tiny_config):
        config = replace(tiny_config, experiment='kappa-sweep')
        experiment = KappaSweepExperiment(config, LOGGER)
        experiment.run_experiment()
        rows = read_rows(os.path.join(config.output_dir, 'kappa_sweep.csv'))
        assert rows[0] == ['n_actions', 'alpha', 'kappa', 'kappa_over_2']
        assert len(rows) == 1 + 6 + 7
        uniform = [row for row in rows[1:] if row[0] == '2' and row[1] == '0.5']
        assert uniform == [['2', '0.5', '2.0', '1.0']]
        assert ['2', '0.75', 'inf', 'inf'] in rows
        assert all(result_names(experiment).values())

    def test_reruns_are_byte_identical(self, tiny_config):
        contents = []
        for _ in range(2):
            KappaSweepExperiment(tiny_config, LOGGER).run_experiment()
            with open(os.path.join(tiny_config.output_dir, 'kappa_sweep.csv'), 'rb') as f:
                contents.append(f.read())
        assert contents[0] == contents[1]


class TestBoundVerification:

    def test_empty_suite_writes_a_header(self, tiny_config):
        config = replace(tiny_config, experiment='verify-bounds', n_mdps=0)
        experiment = BoundVerificationExperiment(config, LOGGER)
        experiment.run_experiment()
        rows = read_rows(os.path.join(config.output_dir, 'bound_verification.csv'))
        assert rows == [['mdp_id', 'pi0_kind', 'lambda', 'eps_opt', 'gap', 'bound_kappa', 'bound_tight',
                         'holds_kappa', 'holds_tight', 'converged', 'updates', 'grad_inf_norm']]
        assert experiment.results == []

    @pytest.mark.slow
    def test_small_suite(self, tiny_config):
        config = replace(tiny_config, experiment='verify-bounds', lam=0.1)
        experiment = BoundVerificationExperiment(config, LOGGER)
        experiment.run_experiment()
        rows = read_rows(os.path.join(config.output_dir, 'bound_verification.csv'))
        assert len(rows) == 1 + 3 * config.n_mdps
        assert all(result_names(experiment).values())


class TestMultitaskExperiments:

    def test_fixed_baselines_outputs(self, tiny_config):
        experiment = FixedBaselinesExperiment(tiny_config, LOGGER)
        experiment.run_experiment()
        curves = read_rows(os.path.join(tiny_config.output_dir, 'fixed_baselines_curves.csv'))
        assert tuple(curves[0]) == CURVE_HEADER
        assert {row[1] for row in curves[1:]} == {'tvpo', 'log_barrier', 'entropy', 'none'}
        assert [row[0] for row in curves[1:]] == sorted(row[0] for row in curves[1:])
        summary = read_rows(os.path.join(tiny_config.output_dir, 'fixed_baselines_summary.csv'))
        assert [row[0] for row in summary[1:]] == ['tvpo', 'log_barrier', 'entropy', 'none']
        checks = result_names(experiment)
        assert checks['curve_row_count']
        assert checks['none_objective_is_value']
        assert {'tvpo_vs_log_barrier', 'tvpo_vs_entropy', 'tvpo_vs_none'} <= set(checks)
        assert {f'tvpo_default_{state}' for state in ('s1', 's3', 's5', 's6')} <= set(checks)

    def test_curve_stride_thins_rows(self, tiny_config):
        config = replace(tiny_config, curve_stride=5, n_seeds=1)
        experiment = FixedBaselinesExperiment(config, LOGGER)
        experiment.run_experiment()
        assert result_names(experiment)['curve_row_count']

    def test_zero_delay_reproduces_reverse_kl(self, tiny_config):
        learned = replace(tiny_config, experiment='learned-baselines',
                          output_dir=os.path.join(tiny_config.output_dir, 'learned'))
        delayed = replace(tiny_config, experiment='delay-sweep', delays=(0.0, 150.0),
                          output_dir=os.path.join(tiny_config.output_dir, 'delay'))
        LearnedBaselinesExperiment(learned, LOGGER).run_experiment()
        DelaySweepExperiment(delayed, LOGGER).run_experiment()

        def curve(path, method):
            return [row[:1] + row[2:] for row in read_rows(path)[1:] if row[1] == method]

        reference = curve(os.path.join(learned.output_dir, 'learned_baselines_curves.csv'), 'reverse_kl')
        zero_delay = curve(os.path.join(delayed.output_dir, 'delay_sweep_curves.csv'), 'reverse_kl@0')
        assert reference and reference == zero_delay
        sweep = read_rows(os.path.join(delayed.output_dir, 'delay_sweep.csv'))
        assert [row[0] for row in sweep[1:]] == ['0.0', '150.0']

    def test_learned_baselines_default_files(self, tiny_config):
        config = replace(tiny_config, experiment='learned-baselines', n_seeds=1)
        experiment = LearnedBaselinesExperiment(config, LOGGER)
        experiment.run_experiment()
        snapshots = read_rows(os.path.join(config.output_dir, 'learned_baselines_defaults.csv'))
        assert len(snapshots) == 1 + 4 * config.n_tasks * 20
        finals = read_rows(os.path.join(config.output_dir, 'learned_baselines_final_defaults.csv'))
        assert [row[2] for row in finals[1:]] == ['s1', 's7'] * 4

    @pytest.mark.slow
    def test_worker_count_does_not_change_output(self, tiny_config):
        contents = []
        for workers in (1, 2):
            config = replace(tiny_config, workers=workers,
                             output_dir=os.path.join(tiny_config.output_dir, f'w{workers}'))
            FixedBaselinesExperiment(config, LOGGER).run_experiment()
            with open(os.path.join(config.output_dir, 'fixed_baselines_curves.csv'), 'rb') as f:
                contents.append(f.read())
        assert contents[0] == contents[1]

    def test_habit_mass_target(self):
        assert habit_mass_target(1.0, 2) == pytest.approx(1 / (1 + 2.718281828459045 ** -1))


class TestConcentration:

    def test_tables(self, tiny_config):
        config = replace(tiny_config, experiment='concentration')
        experiment = ConcentrationExperiment(config, LOGGER)
        experiment.run_experiment()
        rows = read_rows(os.path.join(config.output_dir, 'concentration.csv'))
        assert rows[0] == ['zeta', 'k', 'mean_gap', 'std_gap', 'envelope', 'within_envelope']
        assert [(row[0], row[1]) for row in rows[1:]] == [('0.0', '5'), ('0.0', '20'), ('0.3', '5'), ('0.3', '20')]
        fit = read_rows(os.path.join(config.output_dir, 'concentration_fit.csv'))
        assert [row[0] for row in fit[1:]] == ['0.0', '0.3']
        assert {'gap_decreases_in_k', 'gap_within_envelope_zeta_0.3'} <= set(
            result_names(experiment))


class TestRunner:

    def test_summary_and_export(self, tiny_config, tmp_path):
        runner = ExperimentRunner(LOGGER)
        summary = runner.run_experiment(replace(tiny_config, experiment='kappa-sweep'))
        assert summary['total_failed'] == 0
        assert summary['config']['lambda'] == 0.2
        assert 'EXPERIMENT SUMMARY' in runner.get_summary_report()
        exported = runner.export_results('json', str(tmp_path / 'results.json'))
        with open(exported, encoding='utf-8') as f:
            document = json.load(f)
        assert document['results']['kappa-sweep']['passed'] == 3
        with pytest.raises(ValueError):
            runner.export_results('yaml')

    def test_descriptions(self):
        assert set(ExperimentRunner(LOGGER).describe()) == {
            'fixed-baselines', 'learned-baselines', 'delay-sweep', 'kappa-sweep', 'verify-bounds', 'concentration'}


class TestCommandLine:

    def run(self, *argv):
        return ExperimentApplication().run(list(argv))

    def test_kappa_sweep(self, tmp_path):
        out = str(tmp_path / 'out')
        assert self.run('-q', 'kappa-sweep', '--output-dir', out, '--action-counts', '2,3') == EXIT_OK
        assert os.path.exists(os.path.join(out, 'kappa_sweep.csv'))

    def test_output_dir_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv('MTRPO_OUTPUT_DIR', str(tmp_path / 'env'))
        assert self.run('-q', 'verify-bounds', '--n-mdps', '0') == EXIT_OK
        assert os.path.exists(tmp_path / 'env' / 'bound_verification.csv')

    def test_invalid_value(self, tmp_path):
        assert self.run('-q', 'kappa-sweep', '--output-dir', str(tmp_path), '--gamma', '1.5') == EXIT_CONFIG_ERROR

    def test_missing_config_file(self, tmp_path):
        assert self.run('-c', str(tmp_path / 'absent.ini'), '-q', 'kappa-sweep') == EXIT_IO_ERROR

    def test_unwritable_output(self, tmp_path):
        blocker = tmp_path / 'file'
        blocker.write_text('x')
        assert self.run('-q', 'kappa-sweep', '--output-dir', str(blocker / 'sub')) == EXIT_IO_ERROR

    def test_no_command(self):
        assert self.run() == EXIT_CONFIG_ERROR

    def test_unknown_flag(self):
        with pytest.raises(SystemExit) as excinfo:
            self.run('kappa-sweep', '--not-a-flag')
        assert excinfo.value.code == 2

    def test_no_console_needs_a_log_file(self, tmp_path):
        assert self.run('--no-console', 'kappa-sweep', '--output-dir', str(tmp_path)) == EXIT_CONFIG_ERROR

    def test_generate_config(self, tmp_path):
        target = str(tmp_path / 'generated.ini')
        assert self.run('--generate-config', '-c', target) == EXIT_OK
        assert self.run('--generate-config', '-c', target) == EXIT_IO_ERROR
        assert self.run('-c', target, '-q', 'kappa-sweep', '--output-dir', str(tmp_path / 'o'),
                        '--action-counts', '2') == EXIT_OK

    def test_list(self, capsys):
        assert self.run('list') == EXIT_OK
        assert 'concentration' in capsys.readouterr().out
