"""
Errors Module
Exception hierarchy shared by the parser, the chain model and the monitors.
"""

from typing import Optional


class MonitorError(Exception):
    """Base class for every error raised by this package."""


class PseError(MonitorError, ValueError):
    """Invalid probabilistic specification expression."""


class PseSyntaxError(PseError):
    """Expression text does not follow the grammar."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class UnknownStateError(PseError):
    """A state token that is not part of the declared state space."""

    def __init__(self, token: str, line: Optional[int] = None):
        where = f" on line {line}" if line is not None else ""
        super().__init__(f"Unknown state {token!r}{where}")
        self.token = token
        self.line = line


class DivisionError(PseError):
    """Division whose denominator is not allowed, or division where none may appear."""


class ZeroDenominatorError(PseError, ArithmeticError):
    """A reciprocal evaluated to 1/0."""


class ChainValidationError(MonitorError, ValueError):
    """Transition matrix or chain configuration is not valid."""


class ConsistencyError(MonitorError, ArithmeticError):
    """Posterior expectation requested while the consistency condition fails."""


class InsufficientVisitsError(MonitorError):
    """Not enough recorded visits to materialize the requested outcomes."""


class ConfigError(MonitorError, ValueError):
    """Invalid experiment, prior or monitor configuration."""


class HarnessError(MonitorError, RuntimeError):
    """An experiment could not be carried out as configured."""


class SnapshotError(MonitorError, ValueError):
    """Monitor snapshot is malformed or does not match the monitor."""
