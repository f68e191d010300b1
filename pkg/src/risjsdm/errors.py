"""Exception hierarchy shared by all modules."""


class RisJsdmError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(RisJsdmError, ValueError):
    """An argument is outside the domain accepted by an operation."""


class PlacementError(ParameterError):
    """A DFT index pair does not correspond to a realizable direction."""


class SingularityError(RisJsdmError, ArithmeticError):
    """A linear system is singular or too badly conditioned to solve."""

    def __init__(self, message, group=None, culprit=None):
        super().__init__(message)
        self.group = group
        self.culprit = culprit


class DegenerateBiasError(RisJsdmError, ArithmeticError):
    """The in-group Dirichlet gain vanishes, so an ISR is undefined."""


class ScaleExceededError(RisJsdmError):
    """The brute-force association search is larger than the configured cap."""


class ScenarioError(RisJsdmError, ValueError):
    """A scenario file or override could not be parsed or validated."""
