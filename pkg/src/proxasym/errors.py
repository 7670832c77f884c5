"""Exception types shared across the package."""


class ProxasymError(Exception):
    """Base class for all package-specific errors."""


class NonFiniteInput(ProxasymError):
    """An input that must be finite was nan or inf."""


class ConvergenceFailure(ProxasymError):
    """An iterative scalar solve exhausted its iteration budget."""


class QuadratureUnavailable(ProxasymError):
    """The noise law has no density and no quadrature rule."""


class BracketFailure(ProxasymError):
    """A root bracket could not be established (no sign change)."""


class NoConvergence(ProxasymError):
    """The fixed-point iteration did not reach its residual tolerances."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


class NonFiniteIterate(ProxasymError):
    """A fixed-point iterate became nan or inf."""


class UnknownEntryLaw(ProxasymError):
    """Requested design entry distribution is not implemented."""


class SingularHessian(ProxasymError):
    """The Newton system matrix was not positive definite."""


class LineSearchFailure(ProxasymError):
    """Backtracking line search could not find a decrease."""


class ConfigError(ProxasymError):
    """Invalid experiment configuration; carries the offending field path."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class EmptySelection(ProxasymError):
    """A record filter produced nothing to emit."""
