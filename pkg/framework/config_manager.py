"""
Configuration management for the experiment runner.

This module reads experiment configuration from INI or JSON files, applies
the MTRPO_OUTPUT_DIR fallback and command-line overrides, validates the
result and generates a commented template file.
"""

import configparser
import json
import logging
import os
from dataclasses import asdict, dataclass, fields
from typing import Any, Dict, List, Optional, Tuple

from mtrpo.errors import ConfigError
from mtrpo.mdp_core import max_corruption
from mtrpo.tree_env import N_ACTIONS

OUTPUT_DIR_ENV = 'MTRPO_OUTPUT_DIR'

EXPERIMENTS = ('fixed-baselines', 'learned-baselines', 'delay-sweep', 'kappa-sweep',
               'verify-bounds', 'concentration')

# p_geometric when neither the file nor the flags set it
FIXED_DEFAULT_P = 0.5
LEARNED_DEFAULT_P = 0.7


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Settings of one experiment invocation.

    Defaults follow the published hyperparameters: eta 0.02, eta_reg 0.01,
    lambda 0.2, 80,000 environment steps per task, 20 seeds and 5 tasks.
    """

    experiment: str = 'fixed-baselines'
    n_seeds: int = 20
    n_tasks: int = 5
    env_steps_per_task: int = 80000
    eta: float = 0.02
    eta_reg: float = 0.01
    lam: float = 0.2
    p_geometric: Optional[float] = None
    gamma: float = 0.99
    output_dir: str = 'results'
    workers: int = 1
    master_seed: int = 0
    batch_size: int = 1
    horizon_cutoff: int = 200
    curve_stride: int = 1
    final_window: int = 100
    temperature_rate: float = 0.1
    init_from_default: bool = False
    ewma_weight: Optional[float] = None
    delays: Optional[Tuple[float, ...]] = None
    alphas: Tuple[float, ...] = tuple(round(i / 100, 2) for i in range(101))
    action_counts: Tuple[int, ...] = (2, 4, 8, 16, 32, 64)
    n_mdps: int = 50
    verify_gamma: float = 0.9
    k_values: Tuple[int, ...] = (5, 20, 80, 320)
    zetas: Tuple[float, ...] = (0.0, 0.3)
    n_repeats: int = 50
    k_ref: int = 2000

    @property
    def tree_p(self) -> float:
        """p_geometric, or the per-experiment default (0.7 for learned defaults)."""
        if self.p_geometric is not None:
            return self.p_geometric
        if self.experiment in ('learned-baselines', 'delay-sweep'):
            return LEARNED_DEFAULT_P
        return FIXED_DEFAULT_P

    def delay_steps(self) -> List[float]:
        """Distillation delays in environment steps (default 0/10/25/50/75/100 % of the budget)."""
        if self.delays is not None:
            return list(self.delays)
        return [self.env_steps_per_task * fraction for fraction in (0.0, 0.1, 0.25, 0.5, 0.75, 1.0)]

    def to_dict(self) -> Dict[str, Any]:
        document = asdict(self)
        document['lambda'] = document.pop('lam')
        return document


_LIST_FIELDS = {'delays': float, 'alphas': float, 'action_counts': int, 'k_values': int, 'zetas': float}
_FIELD_NAMES = frozenset(f.name for f in fields(ExperimentConfig))
_INT_FIELDS = ('n_seeds', 'n_tasks', 'env_steps_per_task', 'workers', 'master_seed', 'batch_size',
               'horizon_cutoff', 'curve_stride', 'final_window', 'n_mdps', 'n_repeats', 'k_ref')
_FLOAT_FIELDS = ('eta', 'eta_reg', 'lam', 'p_geometric', 'gamma', 'temperature_rate', 'ewma_weight',
                 'verify_gamma')
_BOOL_FIELDS = ('init_from_default',)
_ARM_FIELDS = ('kind', 'distill_delay', 'max_env_steps', 'max_updates', 'grad_tol', 'mode', 'seed',
               'history_stride')


class ConfigManager:
    """
    Manages configuration for the experiment runner.

    Handles reading INI or JSON configuration files and generating template
    configurations with the default values.
    """

    def __init__(self, config_file: Optional[str] = None):
        """
        Initialize the configuration manager.

        Args:
            config_file: Path to the configuration file; None means defaults only
        """
        self.config_file = config_file
        self.config = configparser.ConfigParser()
        self._default_config = self._get_default_config()
        self.logger = logging.getLogger('mtrpo.config')

    def load_config(self) -> Dict[str, Dict[str, Any]]:
        """
        Load configuration from the INI or JSON file.

        Returns:
            Dictionary of sections (experiment, optimizer, regularizer, logging)

        Raises:
            FileNotFoundError: If the config file doesn't exist
            ConfigError: If the file is malformed or contains invalid values
        """
        if self.config_file is None:
            return {}
        if not os.path.exists(self.config_file):
            raise FileNotFoundError(f"Configuration file '{self.config_file}' not found. "
                                    f"Generate one using --generate-config option.")

        if self.config_file.lower().endswith('.json'):
            config_dict = self._read_json()
        else:
            config_dict = self._read_ini()

        self._validate_config(config_dict)
        return self._convert_types(config_dict)

    def _read_ini(self) -> Dict[str, Dict[str, Any]]:
        try:
            self.config.read(self.config_file)
        except configparser.Error as e:
            raise ConfigError(f"Malformed configuration file '{self.config_file}': {e}",
                              operation='load_config') from e
        return {section: dict(self.config[section]) for section in self.config.sections()}

    def _read_json(self) -> Dict[str, Dict[str, Any]]:
        """Map the JSON document (flat fields plus nested regularizer/optimizer) onto INI sections."""
        try:
            with open(self.config_file, encoding='utf-8') as f:
                document = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Malformed JSON in '{self.config_file}': {e}", operation='load_config') from e
        if not isinstance(document, dict):
            raise ConfigError("JSON configuration must be an object", operation='load_config')

        document = dict(document)
        config_dict: Dict[str, Dict[str, Any]] = {'experiment': {}, 'optimizer': {}, 'regularizer': {},
                                                  'logging': {}}
        regularizer = document.pop('regularizer', {}) or {}
        optimizer = document.pop('optimizer', {}) or {}
        config_dict['logging'] = document.pop('logging', {}) or {}
        for key, value in document.items():
            section = self._section_of(key)
            config_dict[section][key] = value
        for key, value in regularizer.items():
            config_dict['regularizer'][key] = value
        for key, value in optimizer.items():
            config_dict['optimizer'][key] = value
        return config_dict

    def _section_of(self, key: str) -> str:
        for section, values in self._default_config.items():
            if key in values:
                return section
        return 'experiment'

    def generate_template(self, overwrite: bool = False) -> str:
        """
        Generate a template configuration file with the default values.

        Args:
            overwrite: Whether to overwrite existing config file

        Returns:
            Path to the generated template file

        Raises:
            FileExistsError: If config file exists and overwrite=False
        """
        target = self.config_file or 'mtrpo.ini'
        if os.path.exists(target) and not overwrite:
            raise FileExistsError(f"Configuration file '{target}' already exists. "
                                  f"Use --overwrite-config to replace it.")

        with open(target, 'w', encoding='utf-8') as f:
            f.write(self._get_template_content())

        return target

    def _get_default_config(self) -> Dict[str, Dict[str, Any]]:
        """Get the default configuration structure."""
        defaults = ExperimentConfig()
        return {
            'experiment': {
                'experiment': defaults.experiment,
                'n_seeds': defaults.n_seeds,
                'n_tasks': defaults.n_tasks,
                'env_steps_per_task': defaults.env_steps_per_task,
                'p_geometric': defaults.p_geometric,
                'gamma': defaults.gamma,
                'output_dir': defaults.output_dir,
                'workers': defaults.workers,
                'master_seed': defaults.master_seed,
                'curve_stride': defaults.curve_stride,
                'final_window': defaults.final_window,
                'temperature_rate': defaults.temperature_rate,
                'init_from_default': defaults.init_from_default,
                'ewma_weight': defaults.ewma_weight,
                'delays': defaults.delays,
                'alphas': defaults.alphas,
                'action_counts': defaults.action_counts,
                'n_mdps': defaults.n_mdps,
                'verify_gamma': defaults.verify_gamma,
                'k_values': defaults.k_values,
                'zetas': defaults.zetas,
                'n_repeats': defaults.n_repeats,
                'k_ref': defaults.k_ref,
            },
            'optimizer': {
                'eta': defaults.eta,
                'eta_reg': defaults.eta_reg,
                'batch_size': defaults.batch_size,
                'horizon_cutoff': defaults.horizon_cutoff,
            },
            'regularizer': {
                'lambda': defaults.lam,
            },
            'logging': {
                'log_level': 'INFO',
                'log_file': '',
            },
        }

    def _get_template_content(self) -> str:
        """Generate the INI template content with comments."""
        return """# Experiment configuration
#
# Values given on the command line override this file; MTRPO_OUTPUT_DIR
# is used for output_dir when neither sets it.

[experiment]
# Number of independent seeds (0..n_seeds-1) and tasks per seed
n_seeds = 20
n_tasks = 5

# Environment transitions per task
env_steps_per_task = 80000

# Geometric parameter for the number of rewarded leaves
# (leave empty: 0.5 for fixed defaults, 0.7 for learned defaults)
p_geometric =

# Discount factor of the tree tasks
gamma = 0.99

# Directory for CSV output
output_dir = results

# Worker processes for independent cells
workers = 1

# Experiment-level seed combined with every random stream
master_seed = 0

# One learning-curve row every curve_stride updates
curve_stride = 1

# Episodes averaged for the final reward of a task
final_window = 100

# Habit temperature beta(k) = exp(-temperature_rate * k)
temperature_rate = 0.1

# Start each task from log pi_0 instead of the uniform policy
init_from_default = false

# Exponentially weighted habit update weight (empty: running mean)
ewma_weight =

# Delay sweep: distillation delays in environment steps (empty: 0,10,25,50,75,100 % of the budget)
delays =

# Kappa sweep grid (empty alphas: 0.00 to 1.00 in steps of 0.01)
alphas =
action_counts = 2, 4, 8, 16, 32, 64

# Bound verification suite
n_mdps = 50
verify_gamma = 0.9

# Barycenter concentration
k_values = 5, 20, 80, 320
zetas = 0.0, 0.3
n_repeats = 50
k_ref = 2000

[optimizer]
# Learner and distillation step sizes
eta = 0.02
eta_reg = 0.01

# Trajectories per update and maximum trajectory length
batch_size = 1
horizon_cutoff = 200

[regularizer]
# Regularization weight
lambda = 0.2

[logging]
# Log level: DEBUG, INFO, WARNING, ERROR
log_level = INFO

# Log file (empty: console only)
log_file =
"""

    def _validate_config(self, config_dict: Dict[str, Any]):
        """
        Validate section and key names.

        Raises:
            ConfigError: On unknown sections or keys
        """
        for section, values in config_dict.items():
            if section not in self._default_config:
                raise ConfigError(f"Unknown configuration section: [{section}]", operation='load_config')
            known = set(self._default_config[section])
            if section == 'regularizer':
                known |= {'kind', 'distill_delay'}
            if section == 'optimizer':
                known |= {'max_env_steps', 'max_updates', 'grad_tol', 'mode', 'seed', 'history_stride'}
            for key in values:
                if key not in known:
                    raise ConfigError(f"Unknown configuration key: {key} in section [{section}]",
                                      operation='load_config')

    def _convert_types(self, config_dict: Dict[str, Any]) -> Dict[str, Any]:
        """
        Convert string values from INI files to Python types.

        Args:
            config_dict: Configuration dictionary with raw values

        Returns:
            Configuration dictionary with typed values; empty strings become None
        """
        converted_config = {}
        for section, section_data in config_dict.items():
            converted_section = {}
            for key, value in section_data.items():
                name = 'lam' if key == 'lambda' else key
                try:
                    converted_section[key] = _convert_value(name, value)
                except (TypeError, ValueError) as e:
                    raise ConfigError(f"Invalid value for {key} in [{section}]: {value!r}",
                                      operation='load_config') from e
            converted_config[section] = converted_section
        return converted_config

    def build(self, config_dict: Dict[str, Dict[str, Any]], overrides: Optional[Dict[str, Any]] = None,
              environ: Optional[Dict[str, str]] = None) -> ExperimentConfig:
        """
        Combine file values, environment fallback and overrides into an ExperimentConfig.

        Precedence: overrides > file > MTRPO_OUTPUT_DIR (output_dir only) > defaults.

        Raises:
            ConfigError: If the combined values are invalid
        """
        environ = os.environ if environ is None else environ
        values: Dict[str, Any] = {}
        if environ.get(OUTPUT_DIR_ENV):
            values['output_dir'] = environ[OUTPUT_DIR_ENV]
        # regularizer kind/delay and per-run optimizer fields are fixed by each experiment's arms
        for section in ('experiment', 'optimizer', 'regularizer'):
            for key, value in config_dict.get(section, {}).items():
                if value is None:
                    continue
                if key in _ARM_FIELDS:
                    self.logger.warning(f"Ignoring [{section}] {key} = {value!r}: "
                                        f"each experiment sets it per arm")
                    continue
                values['lam' if key == 'lambda' else key] = value
        for key, value in (overrides or {}).items():
            if value is None:
                continue
            name = 'lam' if key == 'lambda' else key
            try:
                values[name] = _convert_value(name, value)
            except (TypeError, ValueError) as e:
                raise ConfigError(f"Invalid value for {key}: {value!r}", operation='build') from e
        unknown = set(values) - _FIELD_NAMES
        if unknown:
            raise ConfigError(f"Unknown experiment settings: {', '.join(sorted(unknown))}",
                              operation='build')
        config = ExperimentConfig(**values)
        validate_experiment_config(config)
        self.logger.debug(f"Resolved configuration: {config.to_dict()}")
        return config


def _convert_value(name: str, value: Any) -> Any:
    if isinstance(value, str):
        value = value.strip()
        if value == '':
            return None
    if value is None:
        return None
    if name in _LIST_FIELDS:
        items = value.split(',') if isinstance(value, str) else list(value)
        return tuple(_LIST_FIELDS[name](item) for item in items if str(item).strip() != '')
    if name in _INT_FIELDS:
        if isinstance(value, float) and not value.is_integer():
            raise ValueError(f"{name} must be an integer")
        return int(value)
    if name in _FLOAT_FIELDS:
        return float(value)
    if name in _BOOL_FIELDS:
        if isinstance(value, bool):
            return value
        return str(value).lower() in ('true', '1', 'yes', 'on')
    if name == 'distill_delay':
        return float(value)
    return value


def validate_experiment_config(config: ExperimentConfig):
    """
    Check value ranges.

    Raises:
        ConfigError: On the first invalid value
    """
    checks = [
        (config.experiment in EXPERIMENTS, f"experiment must be one of {', '.join(EXPERIMENTS)}"),
        (config.n_seeds >= 1, "n_seeds must be at least 1"),
        (config.n_tasks >= 1, "n_tasks must be at least 1"),
        (config.env_steps_per_task >= 0, "env_steps_per_task must be non-negative"),
        (config.eta > 0, "eta must be positive"),
        (config.eta_reg >= 0, "eta_reg must be non-negative"),
        (config.lam >= 0, "lambda must be non-negative"),
        (config.p_geometric is None or 0 < config.p_geometric < 1, "p_geometric must lie in (0, 1)"),
        (0 <= config.gamma < 1, "gamma must lie in [0, 1)"),
        (0 <= config.verify_gamma < 1, "verify_gamma must lie in [0, 1)"),
        (config.workers >= 1, "workers must be at least 1"),
        (config.master_seed >= 0, "master_seed must be non-negative"),
        (config.batch_size >= 1, "batch_size must be at least 1"),
        (config.horizon_cutoff >= 1, "horizon_cutoff must be at least 1"),
        (config.curve_stride >= 1, "curve_stride must be at least 1"),
        (config.final_window >= 1, "final_window must be at least 1"),
        (config.temperature_rate > 0, "temperature_rate must be positive"),
        (config.ewma_weight is None or 0 < config.ewma_weight <= 1, "ewma_weight must lie in (0, 1]"),
        (config.delays is None or all(d >= 0 for d in config.delays), "delays must be non-negative"),
        (all(0 <= a <= 1 for a in config.alphas), "alphas must lie in [0, 1]"),
        (all(n >= 1 for n in config.action_counts), "action_counts must be positive"),
        (config.n_mdps >= 0, "n_mdps must be non-negative"),
        (all(k >= 1 for k in config.k_values), "k_values must be positive"),
        (all(0 <= z <= max_corruption(N_ACTIONS) for z in config.zetas),
         f"zetas must lie in [0, {max_corruption(N_ACTIONS):g}] on the {N_ACTIONS}-action tree"),
        (config.n_repeats >= 1, "n_repeats must be at least 1"),
        (config.k_ref >= 1, "k_ref must be at least 1"),
    ]
    for ok, message in checks:
        if not ok:
            raise ConfigError(message, operation='validate_experiment_config')
