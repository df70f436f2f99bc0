"""Exception hierarchy shared by all careloop modules."""

from __future__ import annotations


class CareloopError(Exception):
    """Base class for every error raised by careloop."""


# registries

class DuplicateId(CareloopError, ValueError):
    pass


class InvalidField(CareloopError, ValueError):
    pass


class NotFound(CareloopError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its argument otherwise
        return str(self.args[0]) if self.args else "not found"


class DuplicateBaseline(CareloopError, ValueError):
    pass


class InvalidPeriod(CareloopError, ValueError):
    pass


class AlreadyAssociated(CareloopError, ValueError):
    pass


class DuplicateInterest(CareloopError, ValueError):
    pass


# sensing / context

class BeforeTraceStart(CareloopError, ValueError):
    pass


class NonMonotoneTimestamp(CareloopError, ValueError):
    pass


# reasoning

class ReasoningError(CareloopError):
    """A detector could not produce a verdict for its input."""


class InsufficientWindow(ReasoningError, ValueError):
    pass


class DegenerateFit(ReasoningError, ValueError):
    pass


# rules

class DuplicateRuleId(CareloopError, ValueError):
    pass


class UnknownRuleId(CareloopError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown rule"


# kernel / network

class TimeTravel(CareloopError, ValueError):
    pass


class NoRoute(CareloopError):
    pass


class RemoteTimeout(CareloopError):
    pass


# harness

class ParseError(CareloopError):
    pass


class ValidationError(CareloopError):
    """Scenario validation failed; ``errors`` lists every problem found."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class UnknownFormat(CareloopError, ValueError):
    pass


class InvariantViolation(CareloopError):
    pass
