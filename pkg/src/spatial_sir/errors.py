"""Exception hierarchy shared by all modules."""


class SpatialSIRError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(SpatialSIRError, ValueError):
    """Inconsistent or malformed model configuration."""


class ParameterError(SpatialSIRError, ValueError):
    """A numeric argument lies outside its admissible range."""


class SingularNormalizerError(SpatialSIRError, ArithmeticError):
    """A kernel normalizer fell below the configured floor."""


class RunawaySimulationError(SpatialSIRError, RuntimeError):
    """The event loop exceeded its candidate budget."""


class StabilityError(SpatialSIRError, ArithmeticError):
    """The time stepper produced a negative susceptible density."""

    def __init__(self, message, suggested_dt=None):
        super().__init__(message)
        self.suggested_dt = suggested_dt


class SolverDefectError(SpatialSIRError, AssertionError):
    """A solved field violates an a-priori bound that must hold."""


class UsageError(SpatialSIRError, ValueError):
    """Arguments that cannot belong together (e.g. logs of different populations)."""
