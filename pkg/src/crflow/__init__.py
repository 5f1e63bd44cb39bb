"""crflow: radial simulator and verification lab for the normalized
Chern-Ricci potential flow on model hyperbolic geometries."""

from ._version import __version__

__all__ = ["__version__"]
