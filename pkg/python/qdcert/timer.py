"""Wall-clock timers for the stages of a run; durations are logged at DEBUG and collected for reports."""

import logging
import time
from contextlib import contextmanager
from typing import Dict, Iterator, Optional

__all__ = ["StatTimer", "time_block"]

logger = logging.getLogger(__name__)


class StatTimer:
    """
    Wall-clock timer for a named region. Use ``start``/``stop`` or a ``with`` block; repeated intervals accumulate.
    """

    name: str
    region: Optional[str]

    def __init__(self, name: str, region: Optional[str] = None):
        self.name = name
        self.region = region
        self._total = 0.0
        self._started: Optional[float] = None

    @property
    def running(self) -> bool:
        return self._started is not None

    def start(self) -> None:
        if self._started is not None:
            raise RuntimeError(f"timer {self.name} is already running")
        self._started = time.perf_counter()

    def stop(self) -> float:
        if self._started is None:
            raise RuntimeError(f"timer {self.name} is not running")
        elapsed = time.perf_counter() - self._started
        self._started = None
        self._total += elapsed
        logger.debug("%s: %.6f s", self.label, elapsed)
        return elapsed

    def total_seconds(self) -> float:
        if self._started is not None:
            return self._total + time.perf_counter() - self._started
        return self._total

    @property
    def label(self) -> str:
        return self.name if self.region is None else f"{self.region}/{self.name}"

    def __enter__(self) -> "StatTimer":
        self.start()
        return self

    def __exit__(self, exc_type, exc_value, traceback) -> None:
        self.stop()


@contextmanager
def time_block(name: str, durations: Optional[Dict[str, float]] = None) -> Iterator[StatTimer]:
    """Time the block; when ``durations`` is given its elapsed seconds are stored under ``name``."""
    timer = StatTimer(name)
    with timer:
        yield timer
    if durations is not None:
        durations[name] = timer.total_seconds()
