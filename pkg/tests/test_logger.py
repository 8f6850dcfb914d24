"""
Unit tests for the logging setup.
"""

import logging
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.logger import add_file_handler, setup_logger


@pytest.fixture
def fresh_logger():
    """A uniquely named logger whose handlers are closed afterwards."""
    created = []

    def make(name, **kwargs):
        logger = setup_logger(name, **kwargs)
        created.append(logger)
        return logger

    yield make
    for logger in created:
        for handler in list(logger.handlers):
            handler.close()
            logger.removeHandler(handler)


class TestLogger:
    """Test suite for setup_logger and add_file_handler."""

    def test_console_only(self, fresh_logger):
        logger = fresh_logger("ecg_test.console")
        assert len(logger.handlers) == 1
        assert not logger.propagate

    def test_setup_with_log_file(self, fresh_logger, tmp_path):
        log_file = tmp_path / "logs" / "run.log"
        logger = fresh_logger("ecg_test.file", level="DEBUG", log_file=log_file)

        logger.info("fold 0 done")
        for handler in logger.handlers:
            handler.flush()

        assert any(isinstance(h, logging.FileHandler) for h in logger.handlers)
        assert "fold 0 done" in log_file.read_text()

    def test_add_file_handler_once(self, fresh_logger, tmp_path):
        logger = fresh_logger("ecg_test.study")
        log_file = tmp_path / "study" / "study.log"

        add_file_handler(logger, log_file)
        add_file_handler(logger, log_file)
        logger.warning("skipped record 102")
        for handler in logger.handlers:
            handler.flush()

        assert sum(isinstance(h, logging.FileHandler) for h in logger.handlers) == 1
        assert log_file.read_text().count("skipped record 102") == 1


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
