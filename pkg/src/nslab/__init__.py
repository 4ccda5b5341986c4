"""Spectral laboratory for weak-L^p Navier-Stokes decay and expansion experiments."""

__version__ = "0.1.0"
