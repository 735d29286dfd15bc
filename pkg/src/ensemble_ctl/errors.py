"""Exception hierarchy.

Everything a caller can trigger with bad input derives from
:class:`PreconditionError`; the CLI maps those to exit code 1.  Failures that
point at a numerical or programming problem derive from
:class:`InternalError` and map to exit code 2.
"""

from __future__ import annotations


class EnsembleError(Exception):
    """Base class of all package errors."""


class PreconditionError(EnsembleError, ValueError):
    """Input violates a documented precondition."""


class InternalError(EnsembleError, RuntimeError):
    """A numerical procedure did not deliver what it promised."""


# -- schedules ---------------------------------------------------------------

class ScheduleError(PreconditionError):
    """Unsorted, overlapping or otherwise malformed control schedule."""


class ScheduleFormatError(ScheduleError):
    """Schedule file could not be parsed."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)
        self.line = line
        self.column = column


# -- halving -----------------------------------------------------------------

class NoValidK(PreconditionError):
    pass


class ZeroSpectrum(PreconditionError):
    pass


class PreconditionViolated(PreconditionError):
    pass


class ContractionFailed(InternalError):
    pass


class MaxCyclesExceeded(PreconditionError):
    def __init__(self, message: str, reports=(), state=None):
        super().__init__(message)
        self.reports = list(reports)
        self.state = state


# -- brackets / descent ------------------------------------------------------

class TauTooLarge(PreconditionError):
    pass


class DegenerateState(PreconditionError):
    pass


class BacktrackFailed(PreconditionError):
    pass


class AlreadyAtPole(PreconditionError):
    pass


class MaxIterExceeded(PreconditionError):
    def __init__(self, message: str, reports=(), state=None):
        super().__init__(message)
        self.reports = list(reports)
        self.state = state


# -- linear control ----------------------------------------------------------

class DegreeInsufficient(PreconditionError):
    pass


class EpsUnderflow(PreconditionError):
    pass


class CrossCheckFailed(InternalError):
    pass


# -- mild solutions ----------------------------------------------------------

class ControlTooLarge(PreconditionError):
    pass


class NoConvergence(InternalError):
    pass


# -- comparison --------------------------------------------------------------

class EpsTooLarge(PreconditionError):
    pass


class NewtonDiverged(InternalError):
    pass


class DomainViolation(PreconditionError):
    pass
