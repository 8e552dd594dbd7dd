"""Homogenization of random walks in periodic environments with high-contrast jumps."""

__version__ = "0.1.0"
