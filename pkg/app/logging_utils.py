from __future__ import annotations

import logging
import sys
from datetime import datetime, timezone

UTC = timezone.utc

# Same line shape as scripts/lib/logging.sh:
#   <UTC_ISO> | <component> | <level> | <message>
LOG_FORMAT = "%(asctime)s | %(name)s | %(levelname)s | %(message)s"
ROOT_LOGGER = "threept"


class UtcFormatter(logging.Formatter):
    def formatTime(self, record: logging.LogRecord, datefmt: str | None = None) -> str:
        ts = datetime.fromtimestamp(record.created, tz=UTC).replace(microsecond=0)
        return ts.isoformat().replace("+00:00", "Z")


def get_logger(component: str) -> logging.Logger:
    return logging.getLogger(f"{ROOT_LOGGER}.{component}")


def configure_logging(level: str = "INFO") -> None:
    root = logging.getLogger(ROOT_LOGGER)
    root.setLevel(level.upper())
    for h in list(root.handlers):
        root.removeHandler(h)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(UtcFormatter(LOG_FORMAT))
    root.addHandler(handler)
    root.propagate = False


def kv(**fields: object) -> str:
    """Render fields as the `key=value` message body used by the runner scripts."""
    return " ".join(f"{k}={v}" for k, v in fields.items())
