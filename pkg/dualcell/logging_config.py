"""DualCell structured JSON logging with correlation IDs."""
from __future__ import annotations
import logging, sys, uuid
from contextvars import ContextVar
from pathlib import Path
from typing import Optional
from pythonjsonlogger.jsonlogger import JsonFormatter
from dualcell.config import get_settings

_correlation_id: ContextVar[str] = ContextVar("correlation_id", default="no-case")


def set_correlation_id(cid: Optional[str] = None) -> str:
    cid = cid or str(uuid.uuid4())[:12]
    _correlation_id.set(cid)
    return cid


def get_correlation_id() -> str:
    return _correlation_id.get()


class CorrelationFilter(logging.Filter):
    """Stamp every record with the active experiment case id."""

    def filter(self, record: logging.LogRecord) -> bool:
        record.cid = get_correlation_id()
        return True


def _formatter() -> JsonFormatter:
    return JsonFormatter(
        "%(asctime)s %(levelname)s %(name)s %(cid)s %(message)s",
        rename_fields={"asctime": "ts", "levelname": "level", "name": "logger", "message": "msg"},
    )


_configured = False


def get_logger(name: str) -> logging.Logger:
    global _configured
    logger = logging.getLogger(name)
    if not _configured:
        settings = get_settings()
        level = getattr(logging, settings.log_level.upper(), logging.INFO)
        root = logging.getLogger()
        root.setLevel(level)
        ch = logging.StreamHandler(sys.stdout)
        ch.setFormatter(_formatter())
        ch.addFilter(CorrelationFilter())
        root.addHandler(ch)
        try:
            logs_dir = Path(settings.output.logs_dir)
            logs_dir.mkdir(parents=True, exist_ok=True)
            fh = logging.FileHandler(logs_dir / "dualcell.log", encoding="utf-8")
            fh.setFormatter(_formatter())
            fh.addFilter(CorrelationFilter())
            root.addHandler(fh)
        except OSError:
            pass
        _configured = True
    return logger
