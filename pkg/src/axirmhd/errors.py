"""Exception types shared across the solver framework."""


class ConfigurationError(ValueError):
    """Invalid run/solver configuration (bad counts, unknown keys, ...)."""


class StateError(RuntimeError):
    """Physically corrupt field state (non-positive density, ...)."""


class AssemblyError(RuntimeError):
    """Non-finite entry encountered while building a residual or matrix."""


class SolverFailure(RuntimeError):
    """A linear or nonlinear solve did not produce a usable solution."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class SingularSystemError(SolverFailure):
    """Singular pivot met during direct elimination."""


class FormatError(ValueError):
    """Malformed artifact file (snapshot, run log, ...)."""
