"""Zipper alpha-fractal interpolation and approximation on Cartesian grids."""

__version__ = "0.1.0"
