"""Exception types shared across the package."""


class DimensionMismatch(ValueError):
    """Operands have incompatible lengths."""


class PreconditionViolation(ValueError):
    """A documented parameter precondition does not hold."""


class UnsupportedModel(ValueError):
    """The requested source/channel model is outside the supported family."""
