"""Spectral-dimension toolkit for sparse one-dimensional Schrödinger operators."""

__version__ = "0.1.0"
