"""Certified reduced-order modeling toolkit for 2D periodic Navier-Stokes."""

__version__ = "0.1.0"
