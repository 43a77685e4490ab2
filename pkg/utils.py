"""Shared utility functions used across the project."""

from __future__ import annotations

import logging
import os
from typing import Any

from errors import ConfigError

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


def resolve_log_level(raw: str | None) -> str:
    """Known level names pass through upper-cased; anything else falls back to INFO."""
    level = (raw or "INFO").strip().upper()
    return level if level in LOG_LEVELS else "INFO"


# Configure logging; config.validate_config reports a bad HCG_LOG_LEVEL
logging.basicConfig(
    level=resolve_log_level(os.getenv("HCG_LOG_LEVEL")),
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    datefmt="%Y-%m-%d %H:%M:%S",
)

logger = logging.getLogger(__name__)


def set_log_level(level: str) -> None:
    """Change the root log level after start-up (used by the CLI flag)."""
    logging.getLogger().setLevel(level.upper())


def fmt_str(x: Any, width: int) -> str:
    """Format any value as a single-line, fixed-width string."""
    s = "" if x is None else str(x)
    s = s.replace("\n", " ").replace("\r", " ")
    return f"{s[:width]:{width}}"


def fmt_float(value: float) -> str:
    """Shortest decimal text that parses back to the identical float."""
    return repr(float(value))


def parse_key_value_text(text: str, source: str = "") -> dict[str, str]:
    """Parse flat `key = value` lines; '#' starts a comment, blank lines are skipped."""
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source} line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip().lower()
        if not key:
            raise ConfigError(f"{source} line {lineno}: empty key")
        if key in entries:
            raise ConfigError(f"{source} line {lineno}: duplicate key '{key}'")
        entries[key] = value.strip()
    return entries


def parse_float_list(value: str) -> tuple[float, ...]:
    """Parse '1.0, 2.5 3' (commas and/or spaces) into floats."""
    parts = value.replace(",", " ").split()
    return tuple(float(p) for p in parts)


def parse_int_list(value: str) -> tuple[int, ...]:
    parts = value.replace(",", " ").split()
    return tuple(int(p) for p in parts)
