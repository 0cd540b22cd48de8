"""Exception hierarchy shared across the package.

Data / configuration problems derive from DataError (CLI exit code 2);
optimization degeneracy is DegenerateProblem (CLI exit code 3).
"""


class RigcalError(Exception):
    """Base class for every error raised by this package."""


# --- geometry ---------------------------------------------------------------

class AngleNearPi(RigcalError):
    """Rotation angle too close to pi for a well-conditioned logarithm."""


class BehindCamera(RigcalError):
    """Point has non-positive depth along the optical axis."""


class NonPositiveDepth(RigcalError):
    """Back-projection requires a strictly positive depth."""


# --- datasets / files -------------------------------------------------------

class DataError(RigcalError):
    """Anything wrong with input files, configs, or their contents."""


class MissingFile(DataError):
    pass


class MalformedJson(DataError):
    pass


class BadMagic(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class NonContiguousIds(DataError):
    pass


class NotARotation(DataError):
    pass


class InvalidValue(DataError):
    """A field violates its invariant (names the offending camera/field)."""


class ConfigError(DataError):
    pass


class CountMismatch(DataError):
    pass


class EmptyVariant(DataError):
    pass


# --- simulator --------------------------------------------------------------

class CameraOutsideScene(RigcalError):
    """Camera center is not inside the free space of the scene."""


# --- objective / optimizer --------------------------------------------------

class NoValidPixels(RigcalError):
    """A depth map has no valid pixels to sample from."""


class DegenerateProblem(RigcalError):
    """The objective has zero valid residual blocks."""


class NotPositiveDefinite(RigcalError):
    """Damped normal equations are not positive definite."""


class SingularNormalEquations(RigcalError):
    """Normal equations stay rank-deficient beyond damping rescue."""
