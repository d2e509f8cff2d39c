"""
Experiment units, one per command-line subcommand.
"""

from .exp_bound_verification import BoundVerificationExperiment
from .exp_concentration import ConcentrationExperiment
from .exp_delay_sweep import DelaySweepExperiment
from .exp_fixed_baselines import FixedBaselinesExperiment
from .exp_kappa_sweep import KappaSweepExperiment
from .exp_learned_baselines import LearnedBaselinesExperiment

__all__ = [
    'BoundVerificationExperiment',
    'ConcentrationExperiment',
    'DelaySweepExperiment',
    'FixedBaselinesExperiment',
    'KappaSweepExperiment',
    'LearnedBaselinesExperiment'
]
