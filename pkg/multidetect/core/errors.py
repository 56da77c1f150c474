"""
Exception hierarchy shared by every module, and the CLI exit codes they map to
"""
from typing import Optional

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_STAGE = 3


class ToolkitError(Exception):
    """Root of every error raised on purpose by multidetect."""

    exit_code = EXIT_STAGE


class ConfigError(ToolkitError, ValueError):
    """Invalid or unknown configuration, bad CLI usage."""

    exit_code = EXIT_USAGE


class ShapeError(ToolkitError, ValueError):
    """Tensor or batch shape incompatible with an operation."""


class GraphStateError(ToolkitError, RuntimeError):
    """Graph used out of order (backward before forward, foreign loss)."""


class DataError(ToolkitError, ValueError):
    """Missing, truncated or invalid input data."""

    exit_code = EXIT_DATA


class StorageError(ToolkitError, ValueError):
    """Persisted container that cannot be read back."""

    exit_code = EXIT_DATA


class StageError(ToolkitError, RuntimeError):
    """Failure inside a harness stage."""

    def __init__(self, stage: str, cause: Optional[BaseException] = None):
        self.stage = stage
        self.cause = cause
        detail = f": {cause}" if cause is not None else ""
        super().__init__(f"Stage '{stage}' failed{detail}")


def shape_report(what: str, expected, got) -> str:
    """Uniform dimension report used in ShapeError messages."""
    return f"{what}: expected shape {tuple(expected)}, got {tuple(got)}"
