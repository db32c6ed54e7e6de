"""Sparse dependency graph recovery from a path-norm constrained multitask MLP."""

__version__ = "0.1.0"
