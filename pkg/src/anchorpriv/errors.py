"""Exception types shared across the package."""


class OutOfDomainError(ValueError):
    """A query point lies outside the partitioned domain (or a cell)."""


class SolverError(RuntimeError):
    """The LP backend failed, or a program expected to be feasible was not."""


class ConfigError(ValueError):
    """A run configuration is missing fields or carries invalid values."""
