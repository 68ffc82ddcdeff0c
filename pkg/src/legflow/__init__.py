"""Legendrian mean curvature flow in η-Einstein Sasakian model spaces."""

__version__ = "0.1.0"
