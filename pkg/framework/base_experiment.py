"""
Base experiment class.

This module provides the abstract base class that every experiment unit
inherits from. It provides result tracking, timing and CSV emission.
"""

import csv
import logging
import os
import time
from abc import ABC, abstractmethod
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from .cell_pool import CellOutcome, CellPool
from .config_manager import ExperimentConfig


class CheckResult:
    """Represents the result of a single directional or bookkeeping check."""

    def __init__(self, name: str, success: bool, message: str = "",
                 details: Optional[Dict[str, Any]] = None, duration: float = 0.0):
        self.name = name
        self.success = success
        self.message = message
        self.details = details or {}
        self.duration = duration
        self.timestamp = time.time()


def format_value(value: Any) -> str:
    """CSV text for one value; floats use repr so reruns match byte for byte."""
    if value is None:
        return ''
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


class BaseExperiment(ABC):
    """
    Abstract base class for all experiments.

    Subclasses implement run_experiment(), write their CSV files through
    write_csv() and record directional claims with add_result().
    """

    name = ''
    description = ''

    def __init__(self, config: ExperimentConfig, logger: logging.Logger, pool: Optional[CellPool] = None):
        """
        Initialize the base experiment.

        Args:
            config: Resolved experiment configuration
            logger: Logger instance for this experiment
            pool: Worker pool for independent cells
        """
        self.config = config
        self.logger = logger
        self.pool = pool or CellPool(config.workers, logger)
        self.results: List[CheckResult] = []
        self.outputs: List[str] = []
        self.experiment_name = self.name or self.__class__.__name__.replace('Experiment', '').lower()

    @abstractmethod
    def run_experiment(self) -> List[CheckResult]:
        """
        Run the experiment and write its CSV files.

        Returns:
            List of CheckResult objects for the experiment's claims
        """

    def add_result(self, name: str, success: bool, message: str = "",
                   details: Optional[Dict[str, Any]] = None, duration: float = 0.0) -> CheckResult:
        """
        Add a check result to the results list.

        Args:
            name: Name of the check
            success: Whether the check passed
            message: Optional message describing the result
            details: Optional dictionary with additional details
            duration: Time taken for the check in seconds

        Returns:
            The created CheckResult object
        """
        result = CheckResult(name, success, message, details, duration)
        self.results.append(result)

        if success:
            self.logger.info(f"✓ {name}: {message}")
        else:
            self.logger.error(f"✗ {name}: {message}")
            if details:
                self.logger.debug(f"  Details: {details}")

        return result

    def record_cell_failure(self, outcome: CellOutcome, label: str):
        """Record a failed cell without aborting the sweep."""
        self.add_result(f"cell_{label}", False, f"Cell failed: {outcome.error}",
                        {'cell_index': outcome.index})

    def output_path(self, filename: str) -> str:
        """Path of an output file inside output_dir, creating the directory."""
        os.makedirs(self.config.output_dir, exist_ok=True)
        return os.path.join(self.config.output_dir, filename)

    def write_csv(self, filename: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> int:
        """
        Stream rows into a UTF-8 CSV file with a header row.

        Args:
            filename: File name inside output_dir
            header: Column names
            rows: Iterable of row sequences, consumed lazily

        Returns:
            Number of data rows written

        Raises:
            OSError: If the file cannot be written
        """
        path = self.output_path(filename)
        count = 0
        with open(path, 'w', encoding='utf-8', newline='') as f:
            writer = csv.writer(f)
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_value(value) for value in row])
                count += 1
        self.outputs.append(path)
        self.logger.info(f"Wrote {count} rows to {path}")
        return count

    def get_summary(self) -> Dict[str, Any]:
        """
        Get a summary of check results.

        Returns:
            Dictionary containing check summary statistics
        """
        total = len(self.results)
        passed = sum(1 for r in self.results if r.success)
        failed = total - passed

        return {
            'experiment': self.experiment_name,
            'total_checks': total,
            'passed': passed,
            'failed': failed,
            'success_rate': (passed / total * 100) if total > 0 else 0,
            'outputs': list(self.outputs),
            'results': self.results
        }
