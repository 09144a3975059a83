"""Exception hierarchy shared across the toolkit.

Two broad classes matter to callers: configuration/validation problems
(bad parameters, malformed files, shape mismatches) and numerical
failures (diverging solvers).  The CLI maps them to exit codes 2 and 3.
"""


class ConedbpError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(ConedbpError):
    """Invalid parameters, presets, shapes or preconditions."""


class FormatError(ConfigError):
    """Malformed or inconsistent on-disk data (payload/sidecar mismatch)."""


class BoundsError(ConfigError):
    """Index outside the valid range of a container."""


class NoIntersectionError(ConfigError):
    """A requested plane misses (or is tangent to) the source trajectory."""


class InsufficientViewsError(ConfigError):
    """An arc holds too few views for the requested operation."""


class UnsupportedError(ConfigError):
    """Operation not available for the given input kind."""


class DegenerateSystemError(ConfigError):
    """A per-plane system cannot be built (tangent plane)."""


class AssemblyError(ConfigError):
    """Plane stack does not cover the target volume exactly."""


class UndefinedReferenceError(ConfigError):
    """Metric reference is identically zero."""


class NumericalError(ConedbpError):
    """Numerical failure during computation."""


class SolverFailureError(NumericalError):
    """Iterative solver diverged.  Carries the last iterate."""

    def __init__(self, message, iterate=None):
        super().__init__(message)
        self.iterate = iterate
