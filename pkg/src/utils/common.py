"""Common utilities for the ADVI project."""
import logging
import time
from typing import Optional

import settings
from .log_manager import log_manager


def setup_logging(debug: bool = False, level: Optional[str] = None) -> None:
    """Configure root logging for command-line runs.

    Args:
        debug (bool): Whether to enable debug logging
        level (str): Explicit level name, overrides ``debug``
    """
    if level is None:
        level = "DEBUG" if debug else settings.ADVI_LOG_LEVEL
    numeric = getattr(logging, level, logging.INFO)
    logging.basicConfig(
        level=numeric,
        format='[%(levelname)s] {%(asctime)s} - %(message)s',
        handlers=[logging.StreamHandler()],
        force=True
    )
    logging.getLogger(settings.PROJECT_NAME).setLevel(numeric)
    # project loggers do not propagate, so their console handler needs the level too
    log_manager.set_console_level(numeric)


class Stopwatch:
    """Monotonic elapsed-time counter."""

    def __init__(self):
        self.start = time.perf_counter()

    def elapsed(self) -> float:
        return time.perf_counter() - self.start


def format_float(value: float) -> str:
    """Round-trippable text form used in every CSV output."""
    return f"{value:.17g}"
