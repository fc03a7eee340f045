"""Tug-of-war with noise for the p-Laplacian."""

__version__ = "0.1.0"
