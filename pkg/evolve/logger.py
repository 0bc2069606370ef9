# ABOUTME: Logging setup for evolve analyses
# ABOUTME: Diagnostics on stderr, optional TimedRotatingFileHandler with daily rotation and fixed format
import logging
import sys
from logging.handlers import TimedRotatingFileHandler
from pathlib import Path

from evolve.config import AnalysisConfig

LOGGER_NAME = 'evolve'


def get_logger(config: AnalysisConfig) -> logging.Logger:
    """
    Create and configure the package logger.

    Library modules log through children of this logger, so configuring it
    once routes every diagnostic to standard error and, when configured, to
    a rotating log file.

    Args:
        config: Analysis configuration holding log level and optional log file

    Returns:
        Configured logger instance
    """
    logger = logging.getLogger(LOGGER_NAME)

    # Avoid adding duplicate handlers if get_logger is called multiple times
    if logger.handlers:
        return logger

    logger.setLevel(logging.DEBUG)
    logger.propagate = False

    formatter = logging.Formatter(
        '%(asctime)s %(levelname)s %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )

    stderr_handler = logging.StreamHandler(sys.stderr)
    stderr_handler.setLevel(config.log_level)
    stderr_handler.setFormatter(formatter)
    logger.addHandler(stderr_handler)

    if config.log_file:
        log_path = Path(config.log_file)
        log_path.parent.mkdir(parents=True, exist_ok=True)

        # Rotate daily at midnight, keep 30 days
        file_handler = TimedRotatingFileHandler(
            config.log_file,
            when='midnight',
            interval=1,
            backupCount=30
        )
        file_handler.setLevel(logging.INFO)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    return logger
