"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid architecture, parameter layout or run configuration."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class DegenerateEstimateError(ArithmeticError):
    """All mixture densities of a sample underflowed.

    ``t`` is the timestamp of the offending history record.
    """

    def __init__(self, t, log_value):
        self.t = int(t)
        self.log_value = float(log_value)
        super().__init__(
            f"importance-sampling denominator underflow at t={self.t} "
            f"(log value {self.log_value:.1f})")


class HistoryRangeError(IndexError):
    """A requested window is not (or not yet) available."""


class ConstraintError(ValueError):
    """Variational parameters violate their marginal constraints."""
