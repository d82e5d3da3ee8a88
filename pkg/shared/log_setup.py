"""
Logging setup for entry points.

Library modules only call ``logging.getLogger(__name__)``; the CLI calls
``configure_logging`` once.
"""

import logging
import sys
from typing import Optional

from pythonjsonlogger import jsonlogger

from shared.config import LoggingSettings, get_settings

TEXT_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"
JSON_FORMAT = "%(asctime)s %(levelname)s %(name)s %(message)s"


def configure_logging(settings: Optional[LoggingSettings] = None) -> None:
    """Install a single stderr handler in text or JSON format."""
    settings = settings or get_settings().logging

    handler = logging.StreamHandler(sys.stderr)
    if settings.log_format.lower() == "json":
        handler.setFormatter(jsonlogger.JsonFormatter(JSON_FORMAT))
    else:
        handler.setFormatter(logging.Formatter(TEXT_FORMAT))

    root = logging.getLogger()
    for existing in list(root.handlers):
        root.removeHandler(existing)
    root.addHandler(handler)
    root.setLevel(settings.log_level.upper())
