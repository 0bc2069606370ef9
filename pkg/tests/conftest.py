"""
Shared pytest fixtures and configuration for all test modules.
"""
import json
import logging

import pytest

from evolve.config import SolverConfig
from evolve.metrics import clear_metrics as reset_gauges


@pytest.fixture(autouse=True)
def clear_metrics():
    """Reset all Prometheus gauges before and after each test.

    The gauges live on a module-level registry, so values written by one
    test would otherwise leak into the next.
    """
    reset_gauges()

    yield  # Run the test

    reset_gauges()


@pytest.fixture(autouse=True)
def clean_logger():
    """Remove handlers from the package logger so get_logger configures it afresh.

    get_logger also stops propagation, which would hide records from caplog
    in later tests.
    """
    logger = logging.getLogger('evolve')
    logger.handlers.clear()
    logger.propagate = True
    yield logger
    for handler in logger.handlers:
        handler.close()
    logger.handlers.clear()
    logger.propagate = True
    logger.setLevel(logging.NOTSET)


@pytest.fixture
def cfg():
    return SolverConfig()


@pytest.fixture
def write_model(tmp_path):
    """Write a model description to a JSON file and return its path."""
    def write(data: dict, name: str = "model.json") -> str:
        path = tmp_path / name
        path.write_text(json.dumps(data))
        return str(path)
    return write
