"""
Logging setup - one named logger per module, "[module] message" lines
"""
import logging
import sys
from typing import Optional

from multidetect.core.config import settings

ROOT_LOGGER = "multidetect"


class _ShortNameFormatter(logging.Formatter):
    """Formats "multidetect.modules.attacks.service" as "[attacks]"."""

    def format(self, record: logging.LogRecord) -> str:
        parts = record.name.split(".")
        if len(parts) >= 3 and parts[1] in ("modules", "core"):
            record.short_name = parts[2]
        else:
            record.short_name = parts[-1]
        return super().format(record)


def configure_logging(level: Optional[str] = None) -> None:
    """Attach a single stderr handler to the package logger. Safe to call twice."""
    logger = logging.getLogger(ROOT_LOGGER)
    logger.setLevel((level or settings.LOG_LEVEL).upper())
    if any(getattr(h, "_multidetect", False) for h in logger.handlers):
        return
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_ShortNameFormatter("[%(short_name)s] %(message)s"))
    handler._multidetect = True
    logger.addHandler(handler)
    logger.propagate = False


def get_logger(name: str) -> logging.Logger:
    return logging.getLogger(name)
