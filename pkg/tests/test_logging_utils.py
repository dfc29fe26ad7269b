from __future__ import annotations

import logging
from pathlib import Path

import pytest

from logging_utils import setup_logger, stage_timer


def test_setup_logger_is_configured_once(tmp_path: Path) -> None:
    log_file = tmp_path / "logs" / "kcut.log"

    logger = setup_logger("tests.once", debug=True, log_file=log_file)
    again = setup_logger("tests.once", debug=False)

    assert again is logger
    assert logger.name == "kcut.tests.once"
    assert logger.level == logging.DEBUG
    assert len(logger.handlers) == 2
    assert logger.propagate is False
    assert log_file.parent.is_dir()

    for handler in logger.handlers:
        handler.close()
    logger.handlers.clear()


def test_stage_timer_accumulates(caplog: pytest.LogCaptureFixture) -> None:
    logger = logging.getLogger("kcut.tests.timer")
    timings: dict[str, float] = {}

    with caplog.at_level(logging.INFO, logger="kcut.tests.timer"):
        with stage_timer(logger, "solve", timings):
            pass
        first = timings["solve"]
        with stage_timer(logger, "solve", timings):
            pass

    assert timings["solve"] >= first >= 0.0
    assert sum("stage=solve elapsed_ms=" in record.getMessage() for record in caplog.records) == 2


def test_stage_timer_records_failed_stage() -> None:
    logger = logging.getLogger("kcut.tests.timer")
    timings: dict[str, float] = {}

    with pytest.raises(RuntimeError):
        with stage_timer(logger, "affinity", timings):
            raise RuntimeError("boom")

    assert "affinity" in timings
