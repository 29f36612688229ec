"""Numerical laboratory for contraction properties of transport maps."""

__version__ = "0.1.0"
