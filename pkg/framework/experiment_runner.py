"""
Experiment runner.

This module loads experiment units dynamically, runs one with a shared
worker pool and collects its check results into a summary that can be
printed or exported.
"""

import importlib
import json
import logging
import time
from typing import Any, Dict, List, Optional, Type

from .base_experiment import BaseExperiment
from .cell_pool import CellPool
from .config_manager import ExperimentConfig


class ExperimentRunner:
    """
    Main execution engine for the experiments.

    Resolves a subcommand to its experiment class, runs it and provides
    centralized result collection and reporting.
    """

    available_experiments = {
        'fixed-baselines': 'experiments.exp_fixed_baselines.FixedBaselinesExperiment',
        'learned-baselines': 'experiments.exp_learned_baselines.LearnedBaselinesExperiment',
        'delay-sweep': 'experiments.exp_delay_sweep.DelaySweepExperiment',
        'kappa-sweep': 'experiments.exp_kappa_sweep.KappaSweepExperiment',
        'verify-bounds': 'experiments.exp_bound_verification.BoundVerificationExperiment',
        'concentration': 'experiments.exp_concentration.ConcentrationExperiment',
    }

    def __init__(self, logger: Optional[logging.Logger] = None):
        self.logger = logger or logging.getLogger('mtrpo.runner')
        self.experiment_classes: Dict[str, Type[BaseExperiment]] = {}
        self.results: Dict[str, Any] = {}

    def _load_experiment_class(self, name: str) -> Type[BaseExperiment]:
        """Import the experiment class for a subcommand."""
        if name in self.experiment_classes:
            return self.experiment_classes[name]
        if name not in self.available_experiments:
            raise KeyError(f"Unknown experiment: {name}")
        module_name, class_name = self.available_experiments[name].rsplit('.', 1)
        module = importlib.import_module(module_name)
        experiment_class = getattr(module, class_name)
        self.experiment_classes[name] = experiment_class
        self.logger.debug(f"Loaded experiment class: {name}")
        return experiment_class

    def describe(self) -> Dict[str, str]:
        """Subcommand name -> one-line description."""
        return {name: self._load_experiment_class(name).description for name in self.available_experiments}

    def run_experiment(self, config: ExperimentConfig) -> Dict[str, Any]:
        """
        Run the experiment named in config.

        Failures inside the experiment are recorded as an error summary;
        OSError is re-raised so the caller can report an IO failure.

        Returns:
            Summary dictionary with overall counts and the experiment summary
        """
        name = config.experiment
        self.logger.info(f"Starting {name} (workers={config.workers}, output_dir={config.output_dir})")
        start_time = time.time()
        experiment_logger = logging.getLogger(f"mtrpo.{name.replace('-', '_')}")

        try:
            experiment_class = self._load_experiment_class(name)
            experiment = experiment_class(config, experiment_logger, CellPool(config.workers, self.logger))
            experiment.run_experiment()
            experiment_summary = experiment.get_summary()
        except OSError:
            raise
        except Exception as e:
            self.logger.error(f"Failed to execute {name}: {e}")
            experiment_summary = {
                'experiment': name,
                'total_checks': 0,
                'passed': 0,
                'failed': 0,
                'success_rate': 0,
                'outputs': [],
                'error': str(e),
                'results': []
            }

        duration = time.time() - start_time
        experiment_summary['duration'] = duration
        summary = {
            'experiment': name,
            'total_checks': experiment_summary['total_checks'],
            'total_passed': experiment_summary['passed'],
            'total_failed': experiment_summary['failed'],
            'overall_success_rate': experiment_summary['success_rate'],
            'overall_duration': duration,
            'config': config.to_dict(),
            'results': {name: experiment_summary}
        }
        self.logger.info(f"{name} completed: {summary['total_passed']}/{summary['total_checks']} checks passed "
                         f"in {duration:.2f}s")
        self.results = summary
        return summary

    def has_errors(self) -> bool:
        """True when the experiment raised instead of completing."""
        return any('error' in data for data in self.results.get('results', {}).values())

    def get_failed_checks(self) -> List[Dict[str, Any]]:
        """
        Get list of all failed checks with details.

        Returns:
            List of failed check details
        """
        failed_checks = []

        for experiment_name, experiment_data in self.results.get('results', {}).items():
            for result in experiment_data.get('results', []):
                if not result.success:
                    failed_checks.append({
                        'experiment': experiment_name,
                        'check_name': result.name,
                        'message': result.message,
                        'details': result.details,
                        'duration': result.duration
                    })

        return failed_checks

    def get_summary_report(self) -> str:
        """
        Generate a text summary report of check results.

        Returns:
            Formatted summary report string
        """
        if not self.results:
            return "No experiment results available"

        lines = []
        lines.append("=" * 60)
        lines.append("EXPERIMENT SUMMARY")
        lines.append("=" * 60)
        lines.append("")

        summary = self.results
        lines.append(f"Experiment: {summary['experiment']}")
        lines.append(f"Total Checks: {summary['total_checks']}")
        lines.append(f"Passed: {summary['total_passed']}")
        lines.append(f"Failed: {summary['total_failed']}")
        lines.append(f"Success Rate: {summary['overall_success_rate']:.1f}%")
        lines.append(f"Duration: {summary['overall_duration']:.2f}s")
        lines.append("")

        lines.append("OUTPUT FILES:")
        lines.append("-" * 40)
        for experiment_data in summary['results'].values():
            for path in experiment_data.get('outputs', []):
                lines.append(f"  {path}")
            if 'error' in experiment_data:
                lines.append(f"✗ Error: {experiment_data['error']}")
        lines.append("")

        failed_checks = self.get_failed_checks()
        if failed_checks:
            lines.append("FAILED CHECKS:")
            lines.append("-" * 40)

            for check in failed_checks:
                lines.append(f"✗ {check['experiment']}.{check['check_name']}")
                lines.append(f"  Message: {check['message']}")
                if check['details']:
                    lines.append(f"  Details: {check['details']}")
                lines.append("")
        elif summary['total_checks'] > 0:
            lines.append("All checks passed")

        lines.append("=" * 60)

        return "\n".join(lines)

    def export_results(self, format_type: str = 'json', output_file: Optional[str] = None) -> str:
        """
        Export results in specified format.

        Args:
            format_type: Export format ('json', 'text')
            output_file: Optional output file path

        Returns:
            Exported data as string or file path if written to file
        """
        if not self.results:
            return "No results to export"

        if format_type.lower() == 'json':
            json_results = self._serialize_results_for_json(self.results)
            output = json.dumps(json_results, indent=2, default=str)
        elif format_type.lower() == 'text':
            output = self.get_summary_report()
        else:
            raise ValueError(f"Unsupported export format: {format_type}")

        if output_file:
            with open(output_file, 'w', encoding='utf-8') as f:
                f.write(output)
            self.logger.info(f"Results exported to {output_file}")
            return output_file

        return output

    def _serialize_results_for_json(self, data):
        """Convert CheckResult objects and tuples into JSON-serializable structures."""
        if isinstance(data, dict):
            return {k: self._serialize_results_for_json(v) for k, v in data.items()}
        elif isinstance(data, (list, tuple)):
            return [self._serialize_results_for_json(item) for item in data]
        elif hasattr(data, '__dict__'):
            return {k: self._serialize_results_for_json(v) for k, v in data.__dict__.items()}
        else:
            return data
