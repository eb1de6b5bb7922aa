"""Exception hierarchy shared across the package."""


class SwirlsimError(Exception):
    """Base class for all swirlsim errors."""


class ConfigError(SwirlsimError):
    """Malformed or semantically invalid run configuration."""


class GeometryError(SwirlsimError):
    """Geometry cannot be voxelized as requested (e.g. sealed inlets)."""


class PreconditionError(SwirlsimError):
    """An operation precondition was violated by the caller."""


class OutOfDomainError(SwirlsimError):
    """Requested sampling location lies outside the meshed domain."""


class LinearSolverError(SwirlsimError):
    """Iterative linear solve failed to reach its tolerance."""

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class CompatibilityError(SwirlsimError):
    """Poisson right-hand side violates the Neumann compatibility condition."""


class NumericalBlowupError(SwirlsimError):
    """NaN/Inf detected in a field during time stepping."""


class InitializationError(SwirlsimError):
    """Pseudo-steady startup failed to settle."""

    def __init__(self, message, residual_history=()):
        super().__init__(message)
        self.residual_history = list(residual_history)


class InsufficientStatisticsError(SwirlsimError):
    """Averaging window too short for the requested statistic."""


class SeedingError(SwirlsimError):
    """Particle release region does not overlap fluid cells."""


class CheckpointError(SwirlsimError):
    """Base class for checkpoint IO failures."""


class CheckpointFormatError(CheckpointError):
    """File is not a swirlsim checkpoint (bad magic)."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint layout version not supported."""


class CheckpointDimensionError(CheckpointError):
    """Checkpoint was written for a different mesh size."""


class CheckpointTruncatedError(CheckpointError):
    """Checkpoint file ends before all payload bytes."""
