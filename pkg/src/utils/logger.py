"""
Logging configuration and utilities
"""

import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, MutableMapping, Optional, Tuple

# Protocol context copied from LogRecord attributes into JSON output
CONTEXT_FIELDS = ("party", "session", "layer", "primitive")


class JSONFormatter(logging.Formatter):
    """JSON formatter for structured logging"""

    def format(self, record: logging.LogRecord) -> str:
        log_data = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
            "module": record.module,
            "function": record.funcName,
            "line": record.lineno,
        }
        for field in CONTEXT_FIELDS:
            value = getattr(record, field, None)
            if value is not None:
                log_data[field] = value

        if record.exc_info:
            log_data["exception"] = self.formatException(record.exc_info)

        return json.dumps(log_data)


class PartyLoggerAdapter(logging.LoggerAdapter):
    """
    Attaches party/session context to every record

    Text output gets a "[alice]" style prefix, JSON output gets the fields.
    """

    def process(self, msg: Any, kwargs: MutableMapping[str, Any]) -> Tuple[Any, Any]:
        extra = dict(self.extra or {})
        extra.update(kwargs.get("extra") or {})
        kwargs["extra"] = extra
        party = extra.get("party")
        return (f"[{party}] {msg}" if party else msg), kwargs


def get_logger(
    name: str,
    level: Optional[str] = None,
    log_file: Optional[Path] = None,
    json_format: Optional[bool] = None,
) -> logging.Logger:
    """
    Get configured logger instance

    Args:
        name: Logger name
        level: Logging level (defaults to settings)
        log_file: Optional log file path (defaults to settings)
        json_format: Use JSON formatting for structured logs (defaults to settings)

    Returns:
        Configured logger instance
    """
    from src.utils.settings import get_settings

    settings = get_settings()
    level = level or settings.log_level
    json_format = settings.log_json if json_format is None else json_format
    if log_file is None and settings.log_file:
        log_file = Path(settings.log_file)

    logger = logging.getLogger(name)
    logger.setLevel(getattr(logging, level.upper()))

    # Avoid adding handlers multiple times
    if logger.handlers:
        return logger

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(logging.DEBUG)

    formatter: logging.Formatter
    if json_format:
        formatter = JSONFormatter()
    else:
        formatter = logging.Formatter(
            "%(asctime)s - %(name)s - %(levelname)s - %(message)s", datefmt="%Y-%m-%d %H:%M:%S"
        )
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    if log_file:
        log_file = Path(log_file)
        log_file.parent.mkdir(parents=True, exist_ok=True)

        file_handler = logging.FileHandler(log_file)
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    logger.propagate = False
    return logger


def get_party_logger(name: str, party: str, session: Optional[str] = None) -> PartyLoggerAdapter:
    """Logger bound to one protocol party"""
    return PartyLoggerAdapter(get_logger(name), {"party": party, "session": session})
