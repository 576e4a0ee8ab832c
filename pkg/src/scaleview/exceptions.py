"""Exception and warning types raised across the toolkit."""


class ScaleviewError(ValueError):
    """Base class for validation errors raised by scaleview."""


class NonPositiveDepth(ScaleviewError):
    pass


class DegenerateHomography(ScaleviewError):
    pass


class DimensionMismatch(ScaleviewError):
    pass


class ShapeMismatch(DimensionMismatch):
    pass


class EmptyValidRegion(ScaleviewError):
    pass


class NoValidPixels(ScaleviewError):
    pass


class TrajectoryTooShort(ScaleviewError):
    pass


class NonFiniteValue(ScaleviewError):
    pass


class InvalidPose(ScaleviewError):
    pass


class EmptyMaskWarning(UserWarning):
    """A masked reduction had no eligible pixels; the loss was set to 0."""


class DegenerateUnionWarning(UserWarning):
    """Soft IoU channel with an empty union; the channel was skipped."""


class UniformMaskWarning(UserWarning):
    """Ground truth is all background or all foreground; SDF has no boundary."""
