"""Cross-modal variational autoencoder for hand keypoint lifting."""

from . import kernels
from .errors import (
    ConfigError,
    DegeneratePoseError,
    DomainError,
    FormatError,
    JointLimitError,
    NumericalError,
    ShapeError,
    TapeError,
    XMVAEError,
)

__version__ = "0.1.0"
