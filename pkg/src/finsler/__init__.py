"""Numerical Finsler geometry on Taylor jets."""

__version__ = "0.1.0"
