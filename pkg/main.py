#!/usr/bin/env python3
"""
mtrpo - Default-Policy Regularized Policy Optimization Experiments

Runs the multitask tree experiments, the kappa sweep, the error-bound
verification suite and the barycenter concentration study, writing every
result table as CSV.

Usage:
    python main.py fixed-baselines                      # TVPO vs fixed defaults
    python main.py learned-baselines --n-seeds 5        # TVPO vs learned defaults
    python main.py kappa-sweep --output-dir out         # Tabulate kappa
    python main.py --generate-config                    # Generate config template
    python main.py list                                 # List experiments
"""

import argparse
import logging
import os
import sys
from typing import Any, Dict, Optional

# Add current directory to Python path for imports
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from framework.config_manager import EXPERIMENTS, ConfigManager, ExperimentConfig
from framework.experiment_runner import ExperimentRunner
from mtrpo.errors import ConfigError

# Import colorama for colored console output
try:
    from colorama import init as colorama_init, Fore, Style
    colorama_init()
    COLORS_AVAILABLE = True
except ImportError:
    COLORS_AVAILABLE = False

    class Fore:
        RED = GREEN = YELLOW = BLUE = CYAN = MAGENTA = WHITE = ""

    class Style:
        BRIGHT = DIM = RESET_ALL = ""

EXIT_OK = 0
EXIT_CHECKS_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_IO_ERROR = 3

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'

# (flag, dest, type, help); list-valued flags take comma-separated values
EXPERIMENT_FLAGS = [
    ('--n-seeds', 'n_seeds', int, 'Number of seeds, run as 0..n_seeds-1 (default: 20)'),
    ('--n-tasks', 'n_tasks', int, 'Tasks per seed (default: 5)'),
    ('--env-steps-per-task', 'env_steps_per_task', int, 'Environment steps per task (default: 80000)'),
    ('--eta', 'eta', float, 'Learner step size (default: 0.02)'),
    ('--eta-reg', 'eta_reg', float, 'Distillation step size (default: 0.01)'),
    ('--lambda', 'lam', float, 'Regularization weight (default: 0.2)'),
    ('--p-geometric', 'p_geometric', float, 'Reward-leaf count parameter (default: 0.5 fixed / 0.7 learned)'),
    ('--gamma', 'gamma', float, 'Tree discount factor (default: 0.99)'),
    ('--output-dir', 'output_dir', str, 'CSV output directory (default: $MTRPO_OUTPUT_DIR or results)'),
    ('--workers', 'workers', int, 'Worker processes (default: 1)'),
    ('--master-seed', 'master_seed', int, 'Experiment-level seed (default: 0)'),
    ('--batch-size', 'batch_size', int, 'Trajectories per update (default: 1)'),
    ('--horizon-cutoff', 'horizon_cutoff', int, 'Maximum trajectory length (default: 200)'),
    ('--curve-stride', 'curve_stride', int, 'One curve row every N updates (default: 1)'),
    ('--final-window', 'final_window', int, 'Episodes averaged for the final reward (default: 100)'),
    ('--temperature-rate', 'temperature_rate', float, 'Habit temperature decay rate (default: 0.1)'),
    ('--ewma-weight', 'ewma_weight', float, 'Exponentially weighted habit update weight'),
    ('--delays', 'delays', str, 'Distillation delays in env steps, comma-separated'),
    ('--alphas', 'alphas', str, 'Kappa-sweep alpha grid, comma-separated'),
    ('--action-counts', 'action_counts', str, 'Kappa-sweep action counts, comma-separated'),
    ('--n-mdps', 'n_mdps', int, 'Verification suite size (default: 50)'),
    ('--verify-gamma', 'verify_gamma', float, 'Verification suite discount (default: 0.9)'),
    ('--k-values', 'k_values', str, 'Concentration sample sizes, comma-separated'),
    ('--zetas', 'zetas', str, 'Concentration corruption levels, comma-separated'),
    ('--n-repeats', 'n_repeats', int, 'Concentration repeats per K (default: 50)'),
    ('--k-ref', 'k_ref', int, 'Reference sample size (default: 2000)'),
]


class ExperimentApplication:
    """
    Main application class for the experiment runner.

    Handles CLI argument parsing, logging setup, configuration management,
    and coordinating the execution of one experiment.
    """

    def __init__(self):
        self.config_manager: Optional[ConfigManager] = None
        self.runner: Optional[ExperimentRunner] = None
        self.logger: Optional[logging.Logger] = None
        self.args = None

    def setup_logging(self, log_level: str = 'INFO', log_file: Optional[str] = None,
                      console_output: bool = True, logger_name: str = 'mtrpo') -> logging.Logger:
        """
        Set up logging configuration.

        Args:
            log_level: Logging level (DEBUG, INFO, WARNING, ERROR)
            log_file: Log file path (optional)
            console_output: Whether to output to console
            logger_name: Root of the logger hierarchy to configure

        Returns:
            Configured logger instance
        """
        logger = logging.getLogger(logger_name)
        logger.setLevel(getattr(logging, log_level.upper()))
        logger.handlers.clear()

        if console_output:
            console_handler = logging.StreamHandler(sys.stdout)
            console_handler.setLevel(getattr(logging, log_level.upper()))
            if COLORS_AVAILABLE:
                console_handler.setFormatter(ColoredFormatter(LOG_FORMAT, datefmt=DATE_FORMAT))
            else:
                console_handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT))
            logger.addHandler(console_handler)

        # File handler (always without colors)
        if log_file:
            file_handler = logging.FileHandler(log_file, encoding='utf-8')
            file_handler.setLevel(logging.DEBUG)
            file_handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT))
            logger.addHandler(file_handler)
            if logger.level > logging.DEBUG:
                logger.setLevel(logging.DEBUG)

        return logger

    def build_parser(self) -> argparse.ArgumentParser:
        """Argument parser with global options and one subcommand per experiment."""
        parser = argparse.ArgumentParser(
            description='Default-policy regularized policy optimization experiments',
            formatter_class=argparse.RawDescriptionHelpFormatter,
            epilog="""
Examples:
  %(prog)s --generate-config                        Generate configuration template
  %(prog)s fixed-baselines                          TVPO vs fixed default policies
  %(prog)s learned-baselines --workers 8            TVPO vs learned default policies
  %(prog)s delay-sweep --delays 0,40000,80000       Delayed distillation
  %(prog)s verify-bounds --n-mdps 10                Error-bound verification
  %(prog)s -c mtrpo.ini concentration               Use a config file
  %(prog)s list                                     List experiments
            """
        )

        config_group = parser.add_argument_group('Configuration')
        config_group.add_argument(
            '--config', '-c',
            help='Configuration file (.ini or .json)'
        )
        config_group.add_argument(
            '--generate-config',
            action='store_true',
            help='Generate configuration template (mtrpo.ini or --config path) and exit'
        )
        config_group.add_argument(
            '--overwrite-config',
            action='store_true',
            help='Overwrite existing configuration file when generating template'
        )

        logging_group = parser.add_argument_group('Logging')
        logging_group.add_argument(
            '--log-level', '-l',
            choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'],
            help='Set logging level (default: from config file, else INFO)'
        )
        logging_group.add_argument(
            '--log-file',
            help='Log file path (default: from config file)'
        )
        logging_group.add_argument(
            '--no-console',
            action='store_true',
            help='Disable console output (log to file only)'
        )

        output_group = parser.add_argument_group('Output')
        output_group.add_argument(
            '--export-results',
            help='Export check results to file (JSON or text based on extension)'
        )
        output_group.add_argument(
            '--export-format',
            choices=['json', 'text'],
            help='Force export format (overrides file extension detection)'
        )
        output_group.add_argument(
            '--quiet', '-q',
            action='store_true',
            help='Minimize output (only show summary)'
        )

        parser.add_argument(
            '--version',
            action='version',
            version='mtrpo 1.0.0'
        )

        experiment_options = argparse.ArgumentParser(add_help=False)
        options_group = experiment_options.add_argument_group('Experiment settings')
        for flag, dest, value_type, help_text in EXPERIMENT_FLAGS:
            options_group.add_argument(flag, dest=dest, type=value_type, help=help_text)
        options_group.add_argument(
            '--init-from-default',
            action='store_true',
            default=None,
            help='Start each task from log pi_0 instead of the uniform policy'
        )

        subparsers = parser.add_subparsers(dest='command', metavar='EXPERIMENT')
        for name in EXPERIMENTS:
            subparsers.add_parser(name, parents=[experiment_options],
                                  help=self._describe(name))
        subparsers.add_parser('list', help='List available experiments and exit')
        return parser

    def parse_arguments(self, argv=None) -> argparse.Namespace:
        """
        Parse command line arguments.

        Returns:
            Parsed arguments namespace
        """
        self.parser = self.build_parser()
        return self.parser.parse_args(argv)

    @staticmethod
    def _describe(name: str) -> str:
        return {
            'fixed-baselines': 'TVPO vs log-barrier, entropy and no regularization',
            'learned-baselines': 'TVPO vs Distral, forward-KL and reverse-KL distillation',
            'delay-sweep': 'Reverse-KL distillation started after a delay',
            'kappa-sweep': 'Tabulate the kappa coefficient',
            'verify-bounds': 'Check the error bounds on random MDPs',
            'concentration': 'Barycenter concentration in the number of tasks',
        }[name]

    def overrides(self) -> Dict[str, Any]:
        """Experiment settings given on the command line."""
        values = {'experiment': self.args.command}
        for _, dest, _, _ in EXPERIMENT_FLAGS:
            values[dest] = getattr(self.args, dest, None)
        values['init_from_default'] = getattr(self.args, 'init_from_default', None)
        return values

    def print_banner(self):
        """Print application banner."""
        if not self.args.quiet:
            banner = f"""
{Fore.CYAN}{Style.BRIGHT}
╔══════════════════════════════════════════════════════════════════════════════╗
║               Default-Policy Regularized Policy Optimization                 ║
║                                                                              ║
║    Multitask tree experiments, error-bound verification and                 ║
║    barycenter concentration, written as CSV                                  ║
╚══════════════════════════════════════════════════════════════════════════════╝
{Style.RESET_ALL}
"""
            print(banner)

    def list_experiments(self):
        """List available experiments."""
        print(f"\n{Fore.CYAN}{Style.BRIGHT}Available Experiments:{Style.RESET_ALL}\n")
        for name in EXPERIMENTS:
            print(f"  {Fore.GREEN}{name:20}{Style.RESET_ALL} - {self._describe(name)}")

        print(f"\n{Fore.YELLOW}Usage examples:{Style.RESET_ALL}")
        print("  python main.py fixed-baselines --n-seeds 20 --env-steps-per-task 20000")
        print("  python main.py kappa-sweep --action-counts 2,4,8")
        print()

    def generate_config_template(self) -> bool:
        """
        Generate configuration template.

        Returns:
            True if successful, False otherwise
        """
        try:
            config_file = ConfigManager(self.args.config).generate_template(overwrite=self.args.overwrite_config)

            print(f"{Fore.GREEN}✓ Configuration template generated: {config_file}{Style.RESET_ALL}")
            print(f"\n{Fore.YELLOW}Next steps:{Style.RESET_ALL}")
            print(f"1. Edit {config_file} to set seeds, budgets and output directory")
            print(f"2. Run an experiment: python main.py -c {config_file} fixed-baselines")
            print("3. Plot the CSV files in the output directory")

            return True

        except FileExistsError as e:
            print(f"{Fore.RED}✗ {e}{Style.RESET_ALL}")
            return False
        except OSError as e:
            print(f"{Fore.RED}✗ Failed to generate config template: {e}{Style.RESET_ALL}")
            return False

    def initialize_application(self) -> Optional[ExperimentConfig]:
        """
        Load configuration and set up logging.

        Returns:
            Resolved ExperimentConfig, or None when the logging options conflict

        Raises:
            ConfigError: On invalid configuration values
            OSError: If the configuration file cannot be read
        """
        self.config_manager = ConfigManager(self.args.config)
        file_config = self.config_manager.load_config()
        logging_config = file_config.get('logging', {})

        log_level = self.args.log_level or (logging_config.get('log_level') or 'INFO').upper()
        if log_level not in ('DEBUG', 'INFO', 'WARNING', 'ERROR'):
            raise ConfigError(f"Invalid log_level: {log_level}", operation='initialize_application')
        if self.args.quiet:
            log_level = 'WARNING'
        log_file = self.args.log_file or logging_config.get('log_file')

        console_output = not self.args.no_console
        if not console_output and not log_file:
            print(f"{Fore.RED}✗ Cannot disable console output without log file{Style.RESET_ALL}")
            return None

        self.logger = self.setup_logging(log_level, log_file, console_output)
        if self.args.config:
            self.logger.info(f"Configuration loaded from {self.args.config}")
        config = self.config_manager.build(file_config, self.overrides())
        self.runner = ExperimentRunner(logging.getLogger('mtrpo.runner'))
        return config

    def run_experiment(self, config: ExperimentConfig) -> int:
        """
        Run the configured experiment and report its checks.

        Returns:
            Exit code
        """
        try:
            results = self.runner.run_experiment(config)
        except OSError as e:
            self.logger.error(f"IO failure: {e}")
            print(f"{Fore.RED}✗ IO failure: {e}{Style.RESET_ALL}")
            return EXIT_IO_ERROR

        if not self.args.quiet:
            print("\n" + self.runner.get_summary_report())
        elif results['total_failed'] == 0 and not self.runner.has_errors():
            print(f"{Fore.GREEN}✓ All {results['total_checks']} checks passed{Style.RESET_ALL}")
        else:
            print(f"{Fore.RED}✗ {results['total_failed']}/{results['total_checks']} checks failed{Style.RESET_ALL}")

        if self.args.export_results:
            if not self.export_results():
                return EXIT_IO_ERROR

        if results['total_failed'] == 0 and not self.runner.has_errors():
            return EXIT_OK
        return EXIT_CHECKS_FAILED

    def export_results(self) -> bool:
        """Export results to the --export-results file."""
        export_file = self.args.export_results
        export_format = self.args.export_format
        if not export_format:
            export_format = 'text' if export_file.lower().endswith('.txt') else 'json'
        try:
            output_path = self.runner.export_results(export_format, export_file)
        except OSError as e:
            self.logger.error(f"Failed to export results: {e}")
            print(f"{Fore.RED}✗ Failed to export results: {e}{Style.RESET_ALL}")
            return False
        print(f"{Fore.GREEN}✓ Results exported to: {output_path}{Style.RESET_ALL}")
        return True

    def run(self, argv=None) -> int:
        """
        Main application entry point.

        Returns:
            Exit code: 0 success, 1 failed checks, 2 configuration error, 3 IO error
        """
        try:
            self.args = self.parse_arguments(argv)

            if self.args.command == 'list':
                self.list_experiments()
                return EXIT_OK

            if self.args.generate_config:
                return EXIT_OK if self.generate_config_template() else EXIT_IO_ERROR

            if not self.args.command:
                self.parser.print_help()
                return EXIT_CONFIG_ERROR

            self.print_banner()

            try:
                config = self.initialize_application()
            except ConfigError as e:
                print(f"{Fore.RED}✗ Configuration error: {e}{Style.RESET_ALL}")
                return EXIT_CONFIG_ERROR
            except OSError as e:
                print(f"{Fore.RED}✗ Cannot read configuration: {e}{Style.RESET_ALL}")
                return EXIT_IO_ERROR
            if config is None:
                return EXIT_CONFIG_ERROR

            exit_code = self.run_experiment(config)
            if not self.args.quiet:
                if exit_code == EXIT_OK:
                    print(f"\n{Fore.GREEN}{Style.BRIGHT}✓ {config.experiment} finished; CSV files in "
                          f"{config.output_dir}{Style.RESET_ALL}")
                elif exit_code == EXIT_CHECKS_FAILED:
                    print(f"\n{Fore.RED}{Style.BRIGHT}✗ Some checks failed. Check the logs for details."
                          f"{Style.RESET_ALL}")
            return exit_code

        except KeyboardInterrupt:
            print(f"\n{Fore.YELLOW}⚠ Interrupted by user{Style.RESET_ALL}")
            return EXIT_CHECKS_FAILED


class ColoredFormatter(logging.Formatter):
    """Custom log formatter with colors for console output only."""

    COLORS = {
        'DEBUG': Fore.BLUE,
        'INFO': Fore.GREEN,
        'WARNING': Fore.YELLOW,
        'ERROR': Fore.RED,
        'CRITICAL': Fore.MAGENTA + Style.BRIGHT
    }

    def format(self, record):
        # Copy so the file handler still sees the plain level name
        record_copy = logging.makeLogRecord(record.__dict__)
        log_color = self.COLORS.get(record_copy.levelname, '')
        record_copy.levelname = f"{log_color}{record_copy.levelname}{Style.RESET_ALL}"
        return super().format(record_copy)


def main():
    """Main entry point."""
    app = ExperimentApplication()
    sys.exit(app.run())


if __name__ == '__main__':
    main()
