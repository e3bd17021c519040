"""Microstructure energies for linear differential constraints.

Operator symbols and wave cones, periodic grids and Fourier multipliers,
elastic and surface energies, explicit laminate constructions (simple,
branching and T3), well-set algebra, and a sweep and fitting harness.
"""

from .errors import CheckFailure, MicrolamError, ValidationError

__version__ = "0.1.0"

__all__ = ["CheckFailure", "MicrolamError", "ValidationError", "__version__"]
