"""Exception types shared across the package."""

from __future__ import annotations


class HcgError(Exception):
    """Base class for every error raised on purpose by this package."""


class DimensionError(HcgError, ValueError):
    pass


class ValidationError(HcgError, ValueError):
    pass


class ConfigError(HcgError, ValueError):
    pass


class DataFormatError(HcgError, ValueError):
    """CSV content that cannot be parsed; row/col are 1-based."""

    def __init__(self, message: str, path: str = "", row: int | None = None, col: int | None = None):
        self.path = path
        self.row = row
        self.col = col
        where = path
        if row is not None:
            where += f" row {row}"
        if col is not None:
            where += f" col {col}"
        super().__init__(f"{where.strip()}: {message}" if where.strip() else message)


class CheckpointError(HcgError, ValueError):
    pass


class GradientCheckError(HcgError, RuntimeError):
    pass


class TrainingError(HcgError, RuntimeError):
    pass
