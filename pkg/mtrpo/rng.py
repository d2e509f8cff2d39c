"""
Splittable random streams.

Each (seed, task_index, purpose) tuple maps to its own counter-based Philox
generator built from a numpy SeedSequence. Streams never share state, so a
run reproduces bit for bit regardless of which worker executes it or in
which order cells are scheduled.
"""

from enum import IntEnum

import numpy as np


class Purpose(IntEnum):
    """Named stream purposes; the integer value is part of the stream key."""

    TASK = 0
    TRAJECTORY = 1
    INIT = 2
    CORRUPTION = 3
    REFERENCE = 4
    SUITE = 5


def stream(seed: int, task_index: int = 0, purpose: Purpose = Purpose.TRAJECTORY,
           master_seed: int = 0) -> np.random.Generator:
    """
    Return an independent generator for one (seed, task_index, purpose) cell.

    Args:
        seed: Run-level seed (e.g. 0..n_seeds-1)
        task_index: Task position inside the run
        purpose: What the stream is used for
        master_seed: Experiment-level seed combined with every stream key

    Returns:
        A numpy Generator backed by the Philox counter-based bit generator
    """
    if seed < 0 or task_index < 0 or master_seed < 0:
        raise ValueError("seed, task_index and master_seed must be non-negative")
    entropy = [int(master_seed), int(seed), int(task_index), int(purpose)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def categorical(rng: np.random.Generator, probs: np.ndarray) -> int:
    """Draw one index from a probability vector using a single uniform."""
    cdf = np.cumsum(probs)
    index = int(np.searchsorted(cdf, rng.random() * cdf[-1], side='right'))
    return min(index, len(probs) - 1)


def sample_actions(rng: np.random.Generator, table: np.ndarray) -> np.ndarray:
    """One draw per row of a (states, actions) policy table, one uniform per row."""
    table = np.asarray(table, dtype=float)
    cdf = np.cumsum(table, axis=1)
    draws = rng.random(table.shape[0]) * cdf[:, -1]
    indices = np.sum(cdf <= draws[:, None], axis=1)
    return np.minimum(indices, table.shape[1] - 1)
