"""Exception hierarchy shared by every module."""


class NlneumannError(Exception):
    """Base class for all library errors."""


class ConfigError(NlneumannError, ValueError):
    """Invalid parameters, counts or geometry supplied by the caller."""


class InputError(NlneumannError, ValueError):
    """Non-finite or otherwise unusable input data."""


class DomainError(NlneumannError, ValueError):
    """A point or function lies outside the domain where an operation is defined."""


class GeometryError(DomainError):
    """Distances or collar extents that make a geometric bound meaningless."""


class UsageError(NlneumannError, ValueError):
    """Objects that do not belong together, e.g. functions on different meshes."""


class SolverError(NlneumannError, RuntimeError):
    """An iterative solver failed; ``stats`` carries whatever trace was recorded."""

    def __init__(self, message, stats=None):
        super().__init__(message)
        self.stats = stats
