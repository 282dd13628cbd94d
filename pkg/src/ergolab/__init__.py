"""Numerical laboratory for subadditive cocycles, good times and metric functionals."""

__version__ = "0.1.0"
