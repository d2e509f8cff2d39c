"""
Tree task family.

Twenty states with two actions each: nine decision states s1..s9, six
zero-reward leaves z1..z6, four candidate reward leaves q1..q4 and an
absorbing terminal. Every task in the family shares the topology; tasks
differ only in which candidate leaves pay a reward of 1 on the transition
that enters them. Transitions are deterministic.
"""

import logging
from dataclasses import dataclass
from functools import partial
from typing import Dict, List, Tuple

import numpy as np

from .errors import ValidationError
from .mdp_core import Mdp
from .multitask import TaskFamily

logger = logging.getLogger('mtrpo.tree_env')

DECISION_STATES = tuple(f's{i}' for i in range(1, 10))
ZERO_LEAVES = tuple(f'z{i}' for i in range(1, 7))
REWARD_LEAVES = tuple(f'q{i}' for i in range(1, 5))
TERMINAL = 'term'
STATE_NAMES: Tuple[str, ...] = DECISION_STATES + ZERO_LEAVES + REWARD_LEAVES + (TERMINAL,)
STATE_INDEX: Dict[str, int] = {name: index for index, name in enumerate(STATE_NAMES)}
N_STATES = len(STATE_NAMES)
N_ACTIONS = 2
ROOT = STATE_INDEX['s1']

# (action 0 child, action 1 child) per decision state
CHILDREN = {
    's1': ('s2', 's3'),
    's2': ('s4', 'z1'),
    's4': ('z2', 'z3'),
    's3': ('z4', 's5'),
    's5': ('s6', 'z5'),
    's6': ('s7', 'z6'),
    's7': ('s8', 's9'),
    's8': ('q1', 'q2'),
    's9': ('q3', 'q4'),
}

# states where every task's optimal policy makes the same choice
SHARED_STATES = ('s1', 's3', 's5', 's6')
SHARED_ACTIONS = {'s1': 1, 's3': 1, 's5': 0, 's6': 0}


@dataclass(frozen=True)
class TreeFamilyConfig:
    p_geometric: float = 0.5
    gamma: float = 0.99
    reward_leaf_count_cap: int = 4

    def __post_init__(self):
        if not 0.0 < self.p_geometric < 1.0:
            raise ValidationError(f"p_geometric must lie in (0, 1), got {self.p_geometric}",
                                  operation='TreeFamilyConfig')
        if not 0.0 <= self.gamma < 1.0:
            raise ValidationError(f"gamma must lie in [0, 1), got {self.gamma}", operation='TreeFamilyConfig')
        if self.reward_leaf_count_cap != len(REWARD_LEAVES):
            raise ValidationError("the tree has exactly 4 candidate reward leaves",
                                  operation='TreeFamilyConfig')


def state_names() -> List[str]:
    """State naming table in index order."""
    return list(STATE_NAMES)


def leaf_parents() -> Dict[str, Tuple[int, int]]:
    """For each candidate leaf, the (parent state, action) pair that enters it."""
    parents = {}
    for parent, children in CHILDREN.items():
        for action, child in enumerate(children):
            if child in REWARD_LEAVES:
                parents[child] = (STATE_INDEX[parent], action)
    return parents


def build_topology() -> np.ndarray:
    """Deterministic transition tensor P[s, a, s'] of the tree."""
    transition = np.zeros((N_STATES, N_ACTIONS, N_STATES))
    for parent, children in CHILDREN.items():
        for action, child in enumerate(children):
            transition[STATE_INDEX[parent], action, STATE_INDEX[child]] = 1.0
    for leaf in ZERO_LEAVES + REWARD_LEAVES + (TERMINAL,):
        transition[STATE_INDEX[leaf], :, STATE_INDEX[TERMINAL]] = 1.0
    return transition


def task_from_leaves(rewarded: List[str], gamma: float) -> Mdp:
    """Tree task paying 1 on entering each of the named candidate leaves."""
    parents = leaf_parents()
    reward = np.zeros((N_STATES, N_ACTIONS))
    for leaf in rewarded:
        reward[parents[leaf]] = 1.0
    start = np.zeros(N_STATES)
    start[ROOT] = 1.0
    return Mdp(transition=build_topology(), reward=reward, gamma=gamma, rho=start, mu=start)


def sample_task(config: TreeFamilyConfig, rng: np.random.Generator) -> Mdp:
    """
    Draw one task.

    The number of rewarded leaves is Geometric(p) on {1, 2, ...} clamped to
    4; that many candidate leaves are chosen uniformly without replacement.
    """
    count = min(int(rng.geometric(config.p_geometric)), config.reward_leaf_count_cap)
    chosen = rng.choice(len(REWARD_LEAVES), size=count, replace=False)
    rewarded = [REWARD_LEAVES[i] for i in sorted(chosen)]
    logger.debug(f"Sampled tree task with rewarded leaves {rewarded}")
    return task_from_leaves(rewarded, config.gamma)


def tree_family(config: TreeFamilyConfig) -> TaskFamily:
    """Task family drawing tree tasks with the configured geometric reward count."""
    return TaskFamily(sampler=partial(sample_task, config), n_states=N_STATES,
                      n_actions=N_ACTIONS,
                      description=f'tree(p={config.p_geometric}, gamma={config.gamma})')
