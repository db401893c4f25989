# logging_utils.py - loguru sink setup and warning capture for run manifests

import os
import sys
from typing import Dict, List, Optional

from loguru import logger

LOG_FORMAT = "{time:YYYY-MM-DD HH:mm:ss} | {level} | {name} | {message}"
LOG_LEVEL_ENV = "FDT_LOG_LEVEL"


class WarningCollector:
    """loguru sink that keeps WARNING-and-above messages for the run manifest."""

    def __init__(self):
        self.records: List[Dict[str, str]] = []

    def __call__(self, message):
        record = message.record
        self.records.append({
            "level": record["level"].name,
            "module": record["name"] or "",
            "message": record["message"],
        })

    @property
    def messages(self) -> List[str]:
        return [r["message"] for r in self.records]


def resolve_level(level: Optional[str] = None) -> str:
    """Environment variable wins over the configured level."""
    return (os.getenv(LOG_LEVEL_ENV) or level or "INFO").upper()


def configure_logging(level: Optional[str] = None, sink=None, collector: Optional[WarningCollector] = None) -> Optional[int]:
    """
    Reset loguru to a single formatted sink.

    Args:
        level (str): Minimum level for the main sink
        sink: Target for the main sink, stderr by default
        collector (WarningCollector): Optional warning capture sink

    Returns:
        int: handler id of the collector sink, if one was attached
    """
    logger.remove()
    logger.add(sink or sys.stderr, level=resolve_level(level), format=LOG_FORMAT)
    if collector is not None:
        return logger.add(collector, level="WARNING", format="{message}")
    return None
