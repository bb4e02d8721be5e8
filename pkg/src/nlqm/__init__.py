"""Nonlinear quantum mechanics collapse-model laboratory."""
__version__ = "0.1.0"
