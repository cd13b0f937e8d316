"""Exception hierarchy shared by all aitsim modules."""


class AitSimError(Exception):
    """Base class for every error raised by aitsim."""


class InvalidDimensionError(AitSimError, ValueError):
    pass


class InvalidParameterError(AitSimError, ValueError):
    pass


class ModelError(AitSimError):
    """A physical model was assembled inconsistently (e.g. non-Hermitian H)."""


class DegenerateSteadyStateError(AitSimError):
    pass


class IntegrationError(AitSimError):
    """The ODE integrator gave up; ``t_reached`` records how far it got."""

    def __init__(self, message: str, t_reached: float | None = None):
        super().__init__(message)
        self.t_reached = t_reached


class NotDecayedError(AitSimError):
    """A correlation/coherence series had not decayed enough to be transformed."""


class ConvergenceError(AitSimError):
    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class SweepPointError(AitSimError):
    """Wraps a per-point failure of a frequency sweep with the offending frequency."""

    def __init__(self, frequency: float, cause: Exception):
        super().__init__(f"at drive frequency {frequency!r} Hz: {cause}")
        self.frequency = frequency
        self.cause = cause


class ConfigError(AitSimError, ValueError):
    def __init__(self, message: str, key: str | None = None, line: int | str | None = None):
        where = []
        if key is not None:
            where.append(f"key {key!r}")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.key = key
        self.line = line
