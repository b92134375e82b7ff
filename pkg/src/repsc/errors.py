"""Exception hierarchy shared by the solver modules and the CLI exit codes."""


class RepscError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(RepscError, ValueError):
    """Invalid input parameters; ``violations`` lists every failed check."""

    exit_code = 2

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ToleranceError(RepscError):
    """A numerical check ran but missed its tolerance."""

    exit_code = 3


class NumericalError(RepscError):
    """The discretisation cannot represent the requested computation."""

    exit_code = 4


class GridOverflowError(NumericalError):
    """State mass or chirp bandwidth leaves the lattice window."""


class AliasingError(NumericalError):
    """Spectral mass beyond the trusted band exceeds the aliasing budget."""


class ConvergenceError(NumericalError):
    """A truncated limit (time horizon, quadrature) failed to converge."""

    def __init__(self, message, tail=None):
        super().__init__(message)
        self.tail = tail
