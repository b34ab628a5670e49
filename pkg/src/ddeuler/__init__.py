"""Pseudo-spectral toolkit for the density-dependent incompressible Euler equations on the 2-D torus."""

from .spectral import Field, Grid

__all__ = ["Field", "Grid"]
__version__ = "0.1.0"
