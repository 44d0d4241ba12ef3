"""Exception hierarchy for pencrit."""


class PencritError(Exception):
    """Base class for all pencrit errors."""


class ConfigError(PencritError):
    """Malformed or inconsistent configuration (family file, plan file, CLI)."""


class DataFormatError(PencritError):
    """Malformed trajectory CSV or mismatched trajectory kind."""


class ExplosiveSimulationError(PencritError):
    """Simulation exceeded the overflow guard; the parameterization is unstable."""


class SingularMatrixError(PencritError):
    """A curvature matrix is numerically singular (condition number too large)."""


class FitFailureError(PencritError):
    """No optimizer start produced a finite contrast value."""
