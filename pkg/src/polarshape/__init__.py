"""Noncentral elliptical shape distributions via the polar decomposition."""

__version__ = "0.1.0"
