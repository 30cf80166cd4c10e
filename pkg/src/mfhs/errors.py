"""Exception types raised across the package."""


class MFHSError(Exception):
    """Base class for all package errors."""


class CapExceededError(MFHSError):
    """An enumeration or word length exceeded its configured cap."""


class DegenerateGapError(MFHSError):
    """A level has n_k * c_k = 1, so siblings touch and the SSC gap vanishes."""


class ScheduleOverflowError(MFHSError):
    """A schedule value left the signed 64-bit range."""


class InvalidBranchError(MFHSError):
    """A word uses a branch index outside 1..n_k at some level."""


class BracketError(MFHSError):
    """Bisection found no sign change in its (widened) bracket."""


class InsufficientDepthsError(MFHSError):
    """Too few subsequence depths survived the warm-up cutoff."""


class UnboundedBelowError(MFHSError):
    """The Legendre probe decreases at both grid ends of a non-convex input."""


class ConstraintError(MFHSError, ValueError):
    """A measure parameter violates its family constraint.

    ``param`` names the offending parameter so config parsing can point at
    the right line.
    """

    def __init__(self, param: str, message: str):
        super().__init__(message)
        self.param = param


class ConfigError(MFHSError):
    """Malformed or invalid run configuration."""
