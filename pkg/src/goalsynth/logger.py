"""Logging configuration for goal-synth."""

import logging
import sys
from pathlib import Path
from typing import Optional

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'

# Third-party loggers that flood DEBUG output (font scans, subprocess calls)
NOISY_LOGGERS = ('matplotlib', 'PIL', 'graphviz')


def setup_logging(verbose: bool = False, quiet: bool = False,
                  log_file: Optional[Path] = None) -> logging.Logger:
    """Configure logging for a command-line run.

    Args:
        verbose: Enable debug logging
        quiet: Minimal output (warnings and errors only)
        log_file: Also append every record at the same level to this file,
            useful for long search runs

    Returns:
        The `goalsynth` logger
    """
    level = logging.WARNING if quiet else (logging.DEBUG if verbose else logging.INFO)
    formatter = logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT)

    root_logger = logging.getLogger()
    root_logger.setLevel(level)
    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)
        handler.close()

    handlers = [logging.StreamHandler(sys.stdout)]
    if log_file is not None:
        log_file = Path(log_file)
        log_file.parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file, encoding='utf-8'))
    for handler in handlers:
        handler.setLevel(level)
        handler.setFormatter(formatter)
        root_logger.addHandler(handler)

    for name in NOISY_LOGGERS:
        logging.getLogger(name).setLevel(max(level, logging.WARNING))

    logger = logging.getLogger('goalsynth')
    logger.setLevel(level)
    return logger


def get_logger(name: Optional[str] = None) -> logging.Logger:
    """Named logger under the package hierarchy (defaults to 'goalsynth')."""
    return logging.getLogger(name or 'goalsynth')
