"""Momentum-space partial-wave spectral toolkit for the Brown-Ravenhall operator."""

__version__ = "0.1.0"
