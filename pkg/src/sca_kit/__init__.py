"""Successive pseudo-convex approximation solvers."""

__version__ = "0.1.0"
