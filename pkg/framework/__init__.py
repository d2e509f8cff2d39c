"""
Experiment framework.

Configuration, result tracking and the runner shared by every experiment.
"""

from .base_experiment import BaseExperiment, CheckResult
from .cell_pool import CellOutcome, CellPool
from .config_manager import ConfigManager, ExperimentConfig
from .experiment_runner import ExperimentRunner

__all__ = [
    'BaseExperiment',
    'CheckResult',
    'CellOutcome',
    'CellPool',
    'ConfigManager',
    'ExperimentConfig',
    'ExperimentRunner'
]
