"""Exception hierarchy shared across the package."""


class XMVAEError(Exception):
    """Base class for all package errors."""


class ShapeError(XMVAEError, ValueError):
    """Operand shapes do not conform to an operation's rule."""


class DomainError(XMVAEError, ValueError):
    """A value lies outside the domain of a function (e.g. log of a non-positive number)."""


class TapeError(XMVAEError, RuntimeError):
    """Misuse of a gradient tape (non-scalar loss, tape consumed twice, ...)."""


class JointLimitError(XMVAEError, ValueError):
    """A joint angle lies outside its configured limit."""


class DegeneratePoseError(XMVAEError, ValueError):
    """A pose cannot be normalized or projected (zero reference bone, non-positive depth)."""


class FormatError(XMVAEError, ValueError):
    """A file does not follow its documented format."""


class NumericalError(XMVAEError, ArithmeticError):
    """Training produced a non-finite loss."""


class ConfigError(XMVAEError, ValueError):
    """Invalid configuration key or value."""
