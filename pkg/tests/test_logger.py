# ABOUTME: Unit tests for logging module
# ABOUTME: Tests stderr and log file handlers, message writing, and handler reuse
import logging
from logging.handlers import TimedRotatingFileHandler

from evolve.config import AnalysisConfig
from evolve.logger import get_logger


def test_logger_creates_log_file(tmp_path):
    """Test that logger creates log file at specified path."""
    log_file = tmp_path / "logs" / "test.log"

    logger = get_logger(AnalysisConfig(log_file=str(log_file)))
    logger.info("Test message")

    assert log_file.exists()


def test_logger_writes_message(tmp_path):
    """Test that logger writes formatted messages to file."""
    log_file = tmp_path / "test.log"

    logger = get_logger(AnalysisConfig(log_file=str(log_file)))
    test_message = "Classified det on [0.0, 1.0]"
    logging.getLogger('evolve.foliation').info(test_message)

    # Force flush
    for handler in logger.handlers:
        handler.flush()

    log_content = log_file.read_text()
    assert test_message in log_content
    assert "INFO" in log_content


def test_logger_without_log_file_has_only_stderr_handler():
    logger = get_logger(AnalysisConfig())

    assert len(logger.handlers) == 1
    assert isinstance(logger.handlers[0], logging.StreamHandler)
    assert logger.handlers[0].level == logging.WARNING


def test_logger_with_log_file_adds_rotating_handler(tmp_path):
    logger = get_logger(AnalysisConfig(log_file=str(tmp_path / "test.log")))

    assert len(logger.handlers) == 2
    assert any(isinstance(h, TimedRotatingFileHandler) for h in logger.handlers)


def test_logger_reuses_existing_handlers(tmp_path):
    """Test that calling get_logger multiple times doesn't add duplicate handlers."""
    config = AnalysisConfig(log_file=str(tmp_path / "test.log"))

    logger1 = get_logger(config)
    logger2 = get_logger(config)

    # Should be same instance
    assert logger1 is logger2
    assert len(logger1.handlers) == 2


def test_logger_creates_parent_directories(tmp_path):
    """Test that logger creates parent directories if they don't exist."""
    log_file = tmp_path / "nested" / "path" / "to" / "log.log"

    logger = get_logger(AnalysisConfig(log_file=str(log_file)))
    logger.info("Test message")

    assert log_file.parent.exists()
    assert log_file.exists()


def test_stderr_handler_follows_log_level(capsys):
    logger = get_logger(AnalysisConfig(log_level="ERROR"))

    logger.warning("quiet warning")
    logger.error("loud error")

    err = capsys.readouterr().err
    assert "quiet warning" not in err
    assert "loud error" in err


def test_logger_does_not_propagate():
    logger = get_logger(AnalysisConfig())

    assert logger.propagate is False
    assert logger.level == logging.DEBUG
