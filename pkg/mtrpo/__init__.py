"""
mtrpo - KL-regularized policy optimization with default policies.

Tabular MDP solvers, the regularizer family, exact and sampled policy
gradient, error and iteration bounds, multitask default policies (TVPO and
distillation baselines) and the tree task family.
"""

from .bounds import (BoundInputs, BoundReport, IterationVariant, VerificationRecord, error_bound_kappa,
                     error_bound_log_barrier, error_bound_state_dependent, error_bound_tight, iteration_bound,
                     kappa, lambda_for_eps, lambda_for_eps_log_barrier, lambda_state_dependent, mean_kappa,
                     smoothness_beta, verify_error_bound)
from .errors import BoundInputError, ConfigError, MtrpoError, NumericalError, ShapeError, ValidationError
from .mdp_core import (AlphaProfile, DeterministicPolicy, Evaluation, Mdp, SoftmaxParams, StateDist,
                       alpha_profile, evaluate, mismatch_coefficient, performance_difference, policy_probs,
                       random_mdp, solve_optimal, tv_distance, visitation)
from .multitask import (HabitTable, MultitaskResult, TaskFamily, TemperatureSchedule, brute_force_barycenter,
                        concentration_experiment, default_from_habit, habit_update, kl_barycenter,
                        run_task_sequence, tv_barycenter, tvpo_run)
from .optimizer import HistoryRecord, Mode, OptimConfig, RunResult, Termination, exact_gradient, \
    objective, reinforce_gradient, run_exact, run_sampled, sample_trajectory
from .regularizers import (DefaultKind, DefaultPolicy, RegularizerKind, RegularizerSpec, default_update,
                           omega_grad, omega_value)
from .tree_env import TreeFamilyConfig, tree_family

__version__ = '1.0.0'
