"""Exception hierarchy shared by every module of the package."""


class CircadiaError(Exception):
    """Base class for all errors raised by circadia."""


class InputError(CircadiaError, ValueError):
    """Malformed or non-finite input data."""


class ParameterError(CircadiaError, ValueError):
    """Invalid distribution or model parameters."""


class InsufficientDataError(CircadiaError, ValueError):
    """A subject has too few measurements for the requested model order."""


class SingularDesignError(CircadiaError, ValueError):
    """The design matrix does not have full column rank."""


class InsufficientCohortError(CircadiaError, ValueError):
    """Fewer subjects than the population estimator needs."""


class InconsistentOrderError(CircadiaError, ValueError):
    """Individual fits with different harmonic orders were mixed."""


class DegeneratePointError(CircadiaError, ValueError):
    """A Jacobian was requested where an amplitude is exactly zero."""


class SingularCovarianceError(CircadiaError, ValueError):
    """The covariance of a Wald contrast cannot be inverted."""


class BootstrapFailureError(CircadiaError, RuntimeError):
    """Too many bootstrap replicates failed to refit."""

    def __init__(self, message, n_failed=0, n_total=0):
        super().__init__(message)
        self.n_failed = n_failed
        self.n_total = n_total


class ParseError(InputError):
    """A data file could not be parsed; ``line`` is 1-based."""

    def __init__(self, message, line=None, path=None):
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.line = line
        self.path = path


class EmptyInputError(ParseError):
    """A data file contained no measurement rows."""


class TrialError(CircadiaError, RuntimeError):
    """A simulation trial failed; wraps the underlying error."""

    def __init__(self, trial, cause):
        super().__init__(f"simulation trial {trial} failed: {cause}")
        self.trial = trial
        self.cause = cause
