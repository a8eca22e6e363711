"""Exception types shared across the package."""


class ParameterError(ValueError):
    """A physical or numerical parameter is out of its valid range."""


class AssemblyError(ValueError):
    """Optimization problem inputs are inconsistent (dimensions, prices, horizon)."""


class ConfigError(ValueError):
    """A run configuration file is missing, malformed, or self-contradictory."""


class SolverError(RuntimeError):
    """The LP backend failed to return a usable solution."""


class ValidationError(RuntimeError):
    """A returned solution violates constraints beyond the accepted residual tolerance."""
