"""Editable spherical-gaussian lighting for HDR panoramas."""

from .errors import (
    DimensionError,
    DomainError,
    EnvlightError,
    NotFoundError,
    OptimizationError,
    ParseError,
    ValidationError,
)
from .geometry import CameraPose, EnvMap, MaskedPano

__version__ = "0.1.0"
