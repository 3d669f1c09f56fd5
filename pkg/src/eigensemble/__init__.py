"""Eigen-ensembles of two-projector density matrices, plus a small
Von Neumann measurement and decoherence simulator."""

__version__ = "0.1.0"

from .errors import NumericalError, ValidationError

__all__ = ["NumericalError", "ValidationError", "__version__"]
