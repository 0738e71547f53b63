"""Numerical laboratory for vector-valued elliptic operators and their semigroups."""

__version__ = "0.1.0"
