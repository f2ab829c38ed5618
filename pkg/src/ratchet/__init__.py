"""Asymptotic velocity of diffusions in zero-average periodic backgrounds."""

__version__ = "0.1.0"
