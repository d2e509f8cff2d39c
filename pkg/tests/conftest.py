import logging

import numpy as np
import pytest

from framework.config_manager import ExperimentConfig
from mtrpo.mdp_core import Mdp, random_mdp
from mtrpo.tree_env import TreeFamilyConfig, tree_family


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)


@pytest.fixture
def small_mdp(rng):
    return random_mdp(rng, 4, 3, 0.9)


@pytest.fixture
def bandit():
    """One state, two actions, r = (1, 0), gamma = 0."""
    return Mdp(transition=np.ones((1, 2, 1)), reward=np.array([[1.0, 0.0]]), gamma=0.0,
               rho=np.array([1.0]), mu=np.array([1.0]))


@pytest.fixture
def mdp_factory():
    """make(seed) -> random MDP with 2..6 states and 2..4 actions."""

    def make(seed, gamma=0.9, uniform_mu=True):
        generator = np.random.default_rng(seed)
        n_states = int(generator.integers(2, 7))
        n_actions = int(generator.integers(2, 5))
        return random_mdp(generator, n_states, n_actions, gamma, uniform_mu=uniform_mu)

    return make


@pytest.fixture
def tree():
    return tree_family(TreeFamilyConfig(p_geometric=0.5, gamma=0.99))


@pytest.fixture
def tiny_config(tmp_path):
    """Experiment settings small enough for smoke tests."""
    return ExperimentConfig(n_seeds=2, n_tasks=2, env_steps_per_task=300, output_dir=str(tmp_path / 'out'),
                            n_mdps=2, k_values=(5, 20), n_repeats=4, k_ref=60, curve_stride=1,
                            action_counts=(2, 3), alphas=(0.0, 0.25, 0.5, 0.9, 1.0))


@pytest.fixture(autouse=True)
def reset_mtrpo_logger():
    """The CLI attaches stdout handlers to 'mtrpo'; drop them between tests."""
    yield
    logger = logging.getLogger('mtrpo')
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()
    logger.setLevel(logging.NOTSET)
