"""Exception hierarchy shared by the library and the CLI."""


class NVMagnonError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgumentError(NVMagnonError, ValueError):
    pass


class ResonanceError(NVMagnonError, ZeroDivisionError):
    """A detuning that must be nonzero vanished (dispersive elimination invalid)."""


class UnstableSqueezingError(NVMagnonError, ValueError):
    """The DPA coefficient reached the mode frequency; no real squeezed frequency."""


class MissingParameterError(NVMagnonError, ValueError):
    pass


class SolverError(NVMagnonError, RuntimeError):
    """Base for numerical failures (mapped to CLI exit code 3)."""


class IntegrationError(SolverError):
    pass


class InvalidModelError(SolverError):
    pass


class AmbiguousSteadyStateError(SolverError):
    def __init__(self, message, null_dimension=None):
        super().__init__(message)
        self.null_dimension = null_dimension


class ResonanceDegeneracyError(SolverError):
    pass


class UndefinedCorrelationError(NVMagnonError, ValueError):
    """g2 requested for a state whose single-quantum population vanishes."""


class ProjectionError(NVMagnonError, ValueError):
    """Too much weight outside the two-level-per-factor subspace."""


class TruncationLeakageError(NVMagnonError, RuntimeError):
    """Top Fock level population above the configured hard limit."""


class ConfigError(NVMagnonError, ValueError):
    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class BudgetExceededError(ConfigError):
    pass


class TruncationWarning(UserWarning):
    pass


class ModelWarning(UserWarning):
    """Physics-validity warning (dispersive ratio, weak-probe regime, ...)."""
