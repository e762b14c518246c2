"""Verification toolkit for the area under the supremum of Brownian motion."""

__version__ = "0.1.0"
