"""Exception types shared across the package."""


class TvgmError(Exception):
    """Base class for all package errors."""


class DomainError(TvgmError, ValueError):
    """An argument lies outside the domain of the operation."""


class DataError(TvgmError, ValueError):
    """Malformed, inconsistent or insufficient input data."""


class ConfigError(TvgmError, ValueError):
    """Invalid run configuration. ``violations`` lists every problem found."""

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class NumericalError(TvgmError, ArithmeticError):
    """Base class for numerical failures."""


class EvaluationError(NumericalError):
    """A covariance evaluation produced non-finite values."""

    def __init__(self, message, params=None):
        self.params = dict(params or {})
        if self.params:
            message = f"{message} (parameters: {self.params})"
        super().__init__(message)


class FactorizationError(NumericalError):
    """Cholesky factorization failed even after the maximal jitter."""

    def __init__(self, message, diagnostics=None, block=None):
        self.diagnostics = dict(diagnostics or {})
        self.block = block
        if block is not None:
            message = f"{message} [block {block}]"
        if self.diagnostics:
            message = f"{message} {self.diagnostics}"
        super().__init__(message)


class ScaleError(NumericalError):
    """A dense computation was refused because it exceeds the size caps."""
