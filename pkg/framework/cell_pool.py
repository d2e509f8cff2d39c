"""
Worker pool for independent experiment cells.

A cell is one (seed, arm) unit of work. Cells run in worker processes when
more than one worker is configured and their outcomes are yielded in cell
order, so the emitted numbers never depend on the worker count.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Any, Callable, Iterator, Optional, Sequence, Tuple


@dataclass(frozen=True)
class CellOutcome:
    """Result of one cell; error holds 'ExceptionType: message' when the cell failed."""

    index: int
    value: Any = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


def _run_cell(function: Callable[[Any], Any], indexed_cell: Tuple[int, Any]) -> CellOutcome:
    index, cell = indexed_cell
    try:
        return CellOutcome(index=index, value=function(cell))
    except Exception as e:
        logging.getLogger('mtrpo.runner').debug(f"Cell {index} raised {type(e).__name__}: {e}")
        return CellOutcome(index=index, error=f"{type(e).__name__}: {e}")


class CellPool:
    """Fixed-size process pool with ordered gathering."""

    def __init__(self, workers: int = 1, logger: Optional[logging.Logger] = None):
        self.workers = max(1, int(workers))
        self.logger = logger or logging.getLogger('mtrpo.runner')

    def map(self, function: Callable[[Any], Any], cells: Sequence[Any]) -> Iterator[CellOutcome]:
        """
        Run function over cells and yield outcomes in cell order.

        function must be a module-level callable so it can be sent to worker
        processes. Exceptions inside a cell are captured in the outcome.
        """
        indexed = list(enumerate(cells))
        task = partial(_run_cell, function)
        if self.workers == 1 or len(indexed) <= 1:
            for item in indexed:
                yield task(item)
            return

        workers = min(self.workers, len(indexed))
        self.logger.debug(f"Running {len(indexed)} cells on {workers} workers")
        with ProcessPoolExecutor(max_workers=workers) as executor:
            yield from executor.map(task, indexed)
