"""Numerical tools for the 3D Dirac operator with a decaying matrix potential."""

__version__ = "0.1.0"
