"""Exception hierarchy shared by the estimation pipeline, the oracle and the CLI."""


class UqeError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class InvalidInputError(UqeError, ValueError):
    exit_code = 2


class EstimationFailure(UqeError, RuntimeError):
    """A fitting stage did not produce a usable result.

    ``diagnostics`` carries whatever the failing stage knew (iteration
    counts, norms, basis dimension, ...).
    """

    exit_code = 3

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class SeparationError(EstimationFailure):
    pass


class WeakInterventionError(EstimationFailure):
    pass


class DegenerateDensityError(EstimationFailure):
    pass


class DegenerateVarianceError(EstimationFailure):
    pass


class UnsupportedOperationError(UqeError, TypeError):
    exit_code = 2


class ExtrapolationError(InvalidInputError):
    pass


class QuadratureFailure(UqeError, RuntimeError):
    exit_code = 4


class InternalConsistencyError(UqeError, AssertionError):
    exit_code = 4
