"""Numerical bounds for one-dimensional and averaged oscillatory integrals."""

__version__ = "0.1.0"
