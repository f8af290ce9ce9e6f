"""Exception types distinguishing user-facing failure categories."""


class ConfigurationError(ValueError):
    """A model or run configuration is internally inconsistent."""


class DomainError(ValueError):
    """A numeric argument lies outside the domain an operation supports."""


class DatasetError(ValueError):
    """An input dataset violates the expected schema or invariants."""


class SingularVarianceError(RuntimeError):
    """The score outer-product matrix is numerically singular."""
