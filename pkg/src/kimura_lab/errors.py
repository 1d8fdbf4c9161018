"""Exception types shared across the package."""


class KimuraLabError(Exception):
    """Base class for all package errors."""


class DimensionMismatchError(KimuraLabError):
    """Operands live on state spaces with different (n, m)."""


class SingularMatrixError(KimuraLabError):
    """A dispersion matrix could not be inverted where it should be."""


class ModelViolationError(KimuraLabError):
    """A coefficient model breaks one of its declared structural properties."""


class ParameterInfeasibleError(KimuraLabError):
    """Analytic bound requested with parameters outside its validity range."""


class EstimationError(KimuraLabError):
    """A Monte-Carlo estimate cannot be formed (e.g. every path excluded)."""


class DuplicatePointError(KimuraLabError):
    """Two sample points coincide under the space-time distance but carry
    different values."""


class ConfigError(KimuraLabError):
    """Run configuration is malformed or inconsistent."""
