"""Exception hierarchy shared by all modules."""


class VFEError(Exception):
    """Base class for package errors."""


class DomainError(VFEError, ValueError):
    """An argument or curve lies outside the domain of an operation."""


class SingularityError(VFEError, ValueError):
    """Evaluation at (or numerically on top of) a singular set."""


class ConvergenceError(VFEError, RuntimeError):
    """An iterative solver failed to meet its tolerance.

    Attributes
    ----------
    trace : list
        Solver history useful for diagnostics (residuals, energies, ...).
    last : object
        Last iterate, when meaningful.
    """

    def __init__(self, message, trace=None, last=None):
        super().__init__(message)
        self.trace = [] if trace is None else list(trace)
        self.last = last


class ConfigError(VFEError, ValueError):
    """Invalid or incomplete run configuration."""


class MissingMinWError(ConfigError, KeyError):
    """Minimal renormalized energy not supplied for a requested N."""
