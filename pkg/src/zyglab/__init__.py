"""Numerical lab for harmonic analysis under Zygmund dilations."""

__version__ = "0.1.0"
