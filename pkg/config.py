"""Configuration management with validation."""

import logging
import os

# dotenv is optional; plain environment variables work without it.
try:
    from dotenv import load_dotenv
    load_dotenv()
except Exception:
    pass

logger = logging.getLogger(__name__)


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name, "")
    try:
        return int(raw) if raw.strip() else default
    except ValueError:
        logger.warning(f"{name}={raw!r} is not an integer; using {default}")
        return default


def _env_float(name: str, default: float) -> float:
    raw = os.getenv(name, "")
    try:
        return float(raw) if raw.strip() else default
    except ValueError:
        logger.warning(f"{name}={raw!r} is not a number; using {default}")
        return default


# Seed used by every command unless --seed is given
DEFAULT_SEED = _env_int("HCG_SEED", 0)
DATA_SEED = _env_int("HCG_DATA_SEED", 0)

LOG_LEVEL = os.getenv("HCG_LOG_LEVEL", "INFO").upper()

WINDOW_LENGTH = _env_int("HCG_WINDOW_LENGTH", 128)
WINDOW_STRIDE = _env_int("HCG_WINDOW_STRIDE", 64)

LEARNING_RATE = _env_float("HCG_LEARNING_RATE", 0.001)
BATCH_SIZE = _env_int("HCG_BATCH_SIZE", 64)
EPOCHS = _env_int("HCG_EPOCHS", 30)

REPEATS = _env_int("HCG_REPEATS", 10)
SWEEP_WORKERS = _env_int("HCG_SWEEP_WORKERS", 1)

SPLIT_FRACTIONS = (0.6, 0.2, 0.2)


def validate_config() -> None:
    """Validate configuration values and raise errors for invalid settings."""
    errors: list[str] = []

    valid_levels = {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}
    if LOG_LEVEL not in valid_levels:
        errors.append(f"Invalid HCG_LOG_LEVEL '{LOG_LEVEL}'. Must be one of: {', '.join(sorted(valid_levels))}")

    if WINDOW_LENGTH < 1:
        errors.append(f"HCG_WINDOW_LENGTH must be >= 1, got: {WINDOW_LENGTH}")
    if WINDOW_STRIDE < 1:
        errors.append(f"HCG_WINDOW_STRIDE must be >= 1, got: {WINDOW_STRIDE}")

    if LEARNING_RATE < 0:
        errors.append(f"HCG_LEARNING_RATE must be non-negative, got: {LEARNING_RATE}")
    if BATCH_SIZE < 1:
        errors.append(f"HCG_BATCH_SIZE must be >= 1, got: {BATCH_SIZE}")
    if EPOCHS < 1:
        errors.append(f"HCG_EPOCHS must be >= 1, got: {EPOCHS}")

    if REPEATS < 1:
        errors.append(f"HCG_REPEATS must be >= 1, got: {REPEATS}")
    if SWEEP_WORKERS < 1:
        errors.append(f"HCG_SWEEP_WORKERS must be >= 1, got: {SWEEP_WORKERS}")

    if DEFAULT_SEED < 0 or DATA_SEED < 0:
        errors.append("HCG_SEED and HCG_DATA_SEED must be non-negative")

    if errors:
        error_msg = "Configuration errors:\n" + "\n".join(f"  - {e}" for e in errors)
        logger.error(error_msg)
        raise ValueError(error_msg)
