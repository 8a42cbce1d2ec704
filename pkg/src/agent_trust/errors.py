"""Exception hierarchy shared across the harness."""

from __future__ import annotations


class TrustHarnessError(Exception):
    """Base class for every error raised by this package."""


class DomainError(TrustHarnessError, ValueError):
    """An argument is outside the domain an operation is defined on."""


class SchemaError(TrustHarnessError):
    """A tabular input is missing required columns."""


class RowError(TrustHarnessError):
    """A single row of a tabular input could not be parsed."""

    def __init__(self, row_index: int, message: str):
        super().__init__(f"row {row_index}: {message}")
        self.row_index = row_index


class LookupFailure(TrustHarnessError, KeyError):
    """A required table entry is absent."""

    def __str__(self) -> str:  # KeyError repr-quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class StateError(TrustHarnessError):
    """An operation is not valid in the object's current state."""
