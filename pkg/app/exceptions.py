"""Exception hierarchy shared by the geometry, functional and CLI layers."""


class WillmoreError(Exception):
    """Base class for every error raised by the package."""


class DomainError(WillmoreError, ValueError):
    """An argument lies outside the domain of a formula (r = 0, rho >= pi, K = 0, ...)."""


class ModelConstraintError(WillmoreError, ValueError):
    """A point or vector violates the membership/tangency constraint of its model."""


class DegenerateError(WillmoreError, ArithmeticError):
    """Coincident or antipodal inputs, a degenerate metric, or an underflowing FD step."""


class NotOnSurfaceError(WillmoreError):
    """The requested base point is not on the image of the surface."""


class EmptyBoundaryError(WillmoreError):
    """A boundary quantity was requested on a closed surface, or vice versa."""


class OrientationError(WillmoreError):
    """A consistent outward normal is not available for the surface."""


class AmbientDimensionError(WillmoreError):
    """The operation is only defined for a specific ambient dimension."""


class ConfigError(WillmoreError):
    """Invalid run configuration: unknown keys, bad values, empty sweeps."""
