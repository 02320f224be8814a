"""
Logging utility for Phase HMM

This module configures the logging for the library and the CLI.
"""
import logging
import os
import sys
from typing import Optional

from src.utils.errors import ValidationError

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def setup_logger(level: str = 'INFO', log_file: Optional[str] = None) -> logging.Logger:
    """
    Set up the root logger.

    Console output goes to stderr so that tables, JSON and CSV written to
    stdout by the CLI stay machine readable.

    Args:
        level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_file: Path to the log file. If None, logs will only go to console.

    Returns:
        The configured logger object
    """
    numeric_level = getattr(logging, str(level).upper(), None)
    if not isinstance(numeric_level, int):
        raise ValidationError(f"Invalid log level: {level}")

    logger = logging.getLogger()
    logger.setLevel(numeric_level)

    # Remove existing handlers to avoid duplication in case of reconfiguration
    for handler in logger.handlers[:]:
        logger.removeHandler(handler)

    formatter = logging.Formatter(LOG_FORMAT, datefmt='%Y-%m-%d %H:%M:%S')

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(numeric_level)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    if log_file:
        log_dir = os.path.dirname(log_file)
        if log_dir:
            os.makedirs(log_dir, exist_ok=True)

        file_handler = logging.FileHandler(log_file)
        file_handler.setLevel(numeric_level)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    return logger


def log_exception(logger: logging.Logger, exc: BaseException) -> None:
    """
    Log a failure as a one-line error; the traceback only shows at DEBUG.

    Args:
        logger: The logger object
        exc: The exception being reported
    """
    logger.error(f"{type(exc).__name__}: {exc}")
    logger.debug("Traceback", exc_info=exc)
