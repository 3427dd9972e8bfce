"""Exception types shared across the package.

Each maps onto one CLI exit code (see ``pepkit.cli``).
"""


class PepError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(PepError, ValueError):
    """Invalid configuration value, unknown key, or violated precondition."""

    exit_code = 1


class ShapeError(PepError, ValueError):
    """Array dimensions do not match the network layer widths."""

    exit_code = 2


class LayoutError(PepError, ValueError):
    """Flat parameter vector does not match the expected layout."""

    exit_code = 2


class ParseError(PepError, ValueError):
    """A data or checkpoint file could not be decoded."""

    exit_code = 2


class NumericError(PepError, ArithmeticError):
    """Non-finite values where finite ones are required."""

    exit_code = 3


class TrainingDiverged(NumericError):
    """Training produced a non-finite loss.

    Attributes:
        epoch: 1-based epoch in which the loss became non-finite.
        series: checkpoints for the epochs completed before divergence.
    """

    def __init__(self, epoch, series):
        super().__init__(f"non-finite training loss in epoch {epoch}")
        self.epoch = epoch
        self.series = series


class ProbabilityFloorWarning(RuntimeWarning):
    """A probability of exactly zero at the true label was clamped."""


class NoPEPBenefitWarning(RuntimeWarning):
    """Both interior probes of the sigma search fell below the baseline."""


class ConditioningWarning(RuntimeWarning):
    """A finite-difference step is too small for float64 resolution."""
