"""Exception hierarchy shared by every module of the lab."""

from typing import Any, Optional


class LabError(Exception):
    """Base class for all errors raised by semigroup_lab."""


# Hypotheses and structural constants

class NonSymmetricError(LabError, ValueError):
    pass


class DegenerateEllipticityError(LabError, ValueError):
    pass


class NotSectorialError(LabError, ValueError):
    pass


class ReducedNotSectorialError(NotSectorialError):
    """The C-free potential produced by the reduction fails the sector condition."""


class HypothesisNotVerifiedError(LabError, ValueError):
    pass


class LemmaViolatedError(LabError, ValueError):
    def __init__(self, message: str, witness: Optional[Any] = None):
        super().__init__(message)
        self.witness = witness


# Grids and solvers

class GridMismatchError(LabError, ValueError):
    pass


class SingularSystemError(LabError, RuntimeError):
    pass


class SizeExceededError(LabError, RuntimeError):
    pass


class NonCommensurateTimesError(LabError, ValueError):
    pass


# Configuration

class ConfigError(LabError, ValueError):
    pass


class ParseError(ConfigError):
    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UnknownKeyError(ParseError):
    pass


class UnknownPresetError(ConfigError):
    pass
