"""Discrete Korn and Poincare-Korn inequalities on rasterized domains."""

from .errors import (
    ContractError,
    DegenerateDomainError,
    DimensionError,
    GeometryError,
    KornlabError,
    MaskMismatchError,
    NonConvergenceError,
    OptimizationStallError,
    ParameterError,
)
from .geometry import DomainMask, GridSpec, named_shape, rasterize, rasterize_shape
from .field import MatrixField, VectorField, generate, lp_norm
from .constants import KornEstimate, paper_constants

__version__ = "0.1.0"

__all__ = [
    "ContractError", "DegenerateDomainError", "DimensionError", "GeometryError",
    "KornlabError", "MaskMismatchError", "NonConvergenceError",
    "OptimizationStallError", "ParameterError",
    "DomainMask", "GridSpec", "named_shape", "rasterize", "rasterize_shape",
    "MatrixField", "VectorField", "generate", "lp_norm",
    "KornEstimate", "paper_constants", "__version__",
]
