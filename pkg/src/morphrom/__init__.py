"""Parametric model order reduction by matrix interpolation for varying meshes."""

__version__ = "0.1.0"
