"""Finite-dimensional gluing of Poincaré complexes: graded linear algebra, DEC field theories, HPL packages."""

__version__ = "0.1.0"
