"""Exception taxonomy shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 2,
SolverError (and subclasses) -> 3, CheckError -> 4. Everything else is a
plain bug and escapes as a traceback.
"""


class ConfigError(ValueError):
    """Invalid configuration or model parameters.

    ``field`` carries a dotted path ("model.cost_params.curvature") so the
    CLI can point at the offending entry.
    """

    def __init__(self, message, field=None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class DomainError(ValueError):
    """An evaluation was requested outside the admissible domain
    (action outside A, time outside [0, T], state outside the band)."""


class DegenerateModelError(ConfigError):
    """The cost family fails the separation requirement a_lower < a_upper:
    the two types are observationally indistinguishable and the credible
    band would be empty."""


class SolverError(RuntimeError):
    """A numerical stage failed to produce a usable result."""


class CflError(SolverError):
    """Stable time-stepping would need an unreasonable substep count.

    ``suggested_dt`` is the largest admissible substep.
    """

    def __init__(self, message, suggested_dt=None):
        self.suggested_dt = suggested_dt
        if suggested_dt is not None:
            message = f"{message} (largest admissible substep: {suggested_dt:.3e})"
        super().__init__(message)


class CheckError(RuntimeError):
    """A verification gate (ordering, sandwich, residual probe) failed."""
