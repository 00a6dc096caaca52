"""Numerical laboratory for smoothing estimates of magnetic Helmholtz
operators on exterior domains."""

__version__ = "0.1.0"
