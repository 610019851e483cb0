"""Exception hierarchy.

Precondition failures map to CLI exit code 1, internal invariant violations
to exit code 2.
"""


class FragscopeError(Exception):
    pass


class PreconditionError(FragscopeError, ValueError):
    pass


class InvariantViolation(FragscopeError, RuntimeError):
    pass


class InvalidModel(PreconditionError):
    pass


class DegenerateTruncation(PreconditionError):
    pass


class DivergentExponent(PreconditionError):
    pass


class BracketFailure(PreconditionError):
    def __init__(self, message, grid=None):
        super().__init__(message)
        self.grid = grid


class OutOfRangeBeta(PreconditionError):
    pass


class OutOfHorizon(PreconditionError):
    pass


class CutoffTooCoarse(PreconditionError):
    pass


class PopulationOverflow(PreconditionError):
    pass


class TruncationActive(PreconditionError):
    pass


class CensoringExcessive(PreconditionError):
    pass


class ConfigError(PreconditionError):
    pass


class MassConservationError(InvariantViolation):
    pass
