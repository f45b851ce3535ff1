"""Exception hierarchy shared by the numerical stages and the CLI."""

from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from .convexify import DescentTrace


class InversionError(Exception):
    """Base class for every failure raised by this package."""


class ConfigurationError(InversionError, ValueError):
    """Invalid configuration or an unsatisfiable numerical setup (CFL, grids)."""


class GridIndexError(InversionError, IndexError):
    pass


class DomainError(InversionError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class IngestionError(InversionError, ValueError):
    """Input file or trace could not be parsed into the expected contract."""


class FitError(InversionError):
    pass


class NoSignalError(InversionError):
    pass


class DivergenceError(InversionError):
    def __init__(self, message: str, trace: DescentTrace | None = None) -> None:
        super().__init__(message)
        self.trace = trace


class PhysicalBreakdownError(InversionError):
    def __init__(self, message: str, x: float) -> None:
        super().__init__(message)
        self.x = x


CONFIGURATION_ERRORS = (ConfigurationError, IngestionError, DomainError, GridIndexError)
