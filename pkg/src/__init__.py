"""Numerical checks of the local trace formula, the explicit formula and their companions."""

__version__ = "0.1.0"
